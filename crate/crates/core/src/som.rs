//! Rectangular batch self-organizing map and crisp granule extraction.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SomParams {
    pub epochs: usize,
    /// Neighborhood radius at the first epoch, in grid units.
    pub initial_radius: f64,
    /// Neighborhood radius at the last epoch.
    pub final_radius: f64,
    pub seed: u64,
}

impl Default for SomParams {
    fn default() -> Self {
        Self {
            epochs: 20,
            initial_radius: 2.0,
            final_radius: 0.25,
            seed: 0,
        }
    }
}

impl SomParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("som.epochs must be at least 1"));
        }
        if !(self.final_radius > 0.0 && self.initial_radius >= self.final_radius)
            || !self.initial_radius.is_finite()
        {
            return Err(Error::param(
                "som radii must satisfy initial_radius >= final_radius > 0",
            ));
        }
        Ok(())
    }

    fn radius_at(&self, epoch: usize) -> f64 {
        let frac = if self.epochs > 1 {
            epoch as f64 / (self.epochs - 1) as f64
        } else {
            1.0
        };
        self.initial_radius + (self.final_radius - self.initial_radius) * frac
    }
}

/// Most-square factorization `n1 * n2 = n` with `n1 <= n2`.
pub fn grid_dims(n: usize) -> (usize, usize) {
    assert!(n >= 1, "neuron count must be positive");
    let mut n1 = (n as f64).sqrt() as usize;
    // Guard the float estimate in both directions.
    while n1 * n1 > n {
        n1 -= 1;
    }
    while (n1 + 1) * (n1 + 1) <= n {
        n1 += 1;
    }
    while !n.is_multiple_of(n1) {
        n1 -= 1;
    }
    (n1, n / n1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub n1: usize,
    pub n2: usize,
    /// Row-major: neuron `r * n2 + c` sits at grid cell `(r, c)`.
    pub prototypes: Vec<Vec<f64>>,
    pub hit_counts: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl SomGrid {
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    /// Best-matching unit; ties go to the lowest neuron index.
    pub fn bmu(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.prototypes.iter().enumerate() {
            let d = sq_dist(p, x);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    fn chebyshev(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = (a / self.n2, a % self.n2);
        let (rb, cb) = (b / self.n2, b % self.n2);
        ra.abs_diff(rb).max(ca.abs_diff(cb)) as f64
    }

    fn assign(&self, data: &Dataset) -> Vec<usize> {
        data.records.iter().map(|r| self.bmu(&r.inputs)).collect()
    }

    fn refresh_hits(&mut self, data: &Dataset) {
        self.hit_counts = vec![0; self.len()];
        for k in self.assign(data) {
            self.hit_counts[k] += 1;
        }
    }

    /// One batch epoch at the given neighborhood radius.
    fn batch_step(&mut self, data: &Dataset, radius: f64) {
        let n = self.len();
        let dim = data.arity();
        let mut sums = vec![vec![0.0; dim]; n];
        let mut counts = vec![0usize; n];
        for r in &data.records {
            let k = self.bmu(&r.inputs);
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(&r.inputs) {
                *s += v;
            }
        }
        let live: Vec<usize> = (0..n).filter(|&k| counts[k] > 0).collect();
        let two_r2 = 2.0 * radius * radius;
        for j in 0..n {
            let mut num = vec![0.0; dim];
            let mut den = 0.0;
            for &k in &live {
                let d = self.chebyshev(j, k);
                let h = (-(d * d) / two_r2).exp();
                if h == 0.0 {
                    continue;
                }
                den += h * counts[k] as f64;
                for (acc, s) in num.iter_mut().zip(&sums[k]) {
                    *acc += h * s;
                }
            }
            // Neurons beyond every live neighborhood keep their weights.
            if den > 0.0 {
                for (w, acc) in self.prototypes[j].iter_mut().zip(num) {
                    *w = acc / den;
                }
            }
        }
    }
}

fn lex_cmp(a: &Record, b: &Record) -> std::cmp::Ordering {
    a.inputs
        .iter()
        .zip(&b.inputs)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Prototypes sampled from the training records, without replacement when
/// there are enough records. Sampling runs over the records in a canonical
/// (lexicographic) order so the result does not depend on record order.
pub fn init_grid(train: &Dataset, dims: (usize, usize), params: &SomParams) -> Result<SomGrid> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (n1, n2) = dims;
    if n1 == 0 || n2 == 0 {
        return Err(Error::param("grid dimensions must be positive"));
    }
    params.validate()?;
    let n = n1 * n2;
    let mut canon: Vec<&Record> = train.records.iter().collect();
    canon.sort_by(|a, b| lex_cmp(a, b));

    let mut rng = seed::rng(params.seed);
    let picks: Vec<usize> = if n <= canon.len() {
        index::sample(&mut rng, canon.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..canon.len())).collect()
    };
    let mut grid = SomGrid {
        n1,
        n2,
        prototypes: picks.iter().map(|&i| canon[i].inputs.clone()).collect(),
        hit_counts: vec![0; n],
    };
    grid.refresh_hits(train);
    Ok(grid)
}

/// Batch SOM with a Gaussian neighborhood over Chebyshev grid distance and
/// a radius decaying linearly across epochs.
pub fn train_som(train: &Dataset, dims: (usize, usize), params: &SomParams) -> Result<SomGrid> {
    let grid = init_grid(train, dims, params)?;
    train_from(grid, train, params)
}

/// Batch training starting from caller-supplied prototypes.
pub fn train_from(mut grid: SomGrid, train: &Dataset, params: &SomParams) -> Result<SomGrid> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate()?;
    if grid.n1 * grid.n2 != grid.len() || grid.prototypes.iter().any(|p| p.len() != train.arity()) {
        return Err(Error::param("prototype shape does not match grid and data"));
    }
    for epoch in 0..params.epochs {
        grid.batch_step(train, params.radius_at(epoch));
    }
    grid.refresh_hits(train);
    Ok(grid)
}

/// Mean Euclidean distance from each record to its BMU prototype.
pub fn quantization_error(grid: &SomGrid, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = grid.prototypes.first().map_or(0, Vec::len);
    if dim != data.arity() {
        return Err(Error::Arity {
            expected: dim,
            found: data.arity(),
        });
    }
    let total: f64 = data
        .records
        .iter()
        .map(|r| sq_dist(&grid.prototypes[grid.bmu(&r.inputs)], &r.inputs).sqrt())
        .sum();
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Granule {
    pub inputs: Vec<f64>,
    pub decision: f64,
    pub support: usize,
}

/// Live SOM prototypes with the mean decision of the records they absorb.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranuleSet {
    pub granules: Vec<Granule>,
    pub source_dims: (usize, usize),
    pub attribute_names: Vec<String>,
    pub decision_name: String,
}

impl GranuleSet {
    pub fn len(&self) -> usize {
        self.granules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.granules.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn total_support(&self) -> usize {
        self.granules.iter().map(|g| g.support).sum()
    }

    /// Granules as plain records (support dropped).
    pub fn to_dataset(&self) -> Dataset {
        Dataset {
            records: self
                .granules
                .iter()
                .map(|g| Record::new(g.inputs.clone(), g.decision))
                .collect(),
            attribute_names: self.attribute_names.clone(),
            decision_name: self.decision_name.clone(),
            norm_params: None,
        }
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.attribute_names.clone();
        header.push(self.decision_name.clone());
        header.push("support".into());
        w.write_record(&header)?;
        for g in &self.granules {
            let mut row: Vec<String> = g.inputs.iter().map(f64::to_string).collect();
            row.push(g.decision.to_string());
            row.push(g.support.to_string());
            w.write_record(&row)?;
        }
        crate::error::csv_text(w)
    }
}

pub fn extract_granules(grid: &SomGrid, train: &Dataset) -> Result<GranuleSet> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = grid.prototypes.first().map_or(0, Vec::len);
    if dim != train.arity() {
        return Err(Error::Arity {
            expected: dim,
            found: train.arity(),
        });
    }
    let n = grid.len();
    let mut sum = vec![0.0; n];
    let mut hits = vec![0usize; n];
    for r in &train.records {
        let k = grid.bmu(&r.inputs);
        sum[k] += r.output;
        hits[k] += 1;
    }
    let granules: Vec<Granule> = (0..n)
        .filter(|&k| hits[k] > 0)
        .map(|k| Granule {
            inputs: grid.prototypes[k].clone(),
            decision: sum[k] / hits[k] as f64,
            support: hits[k],
        })
        .collect();
    if granules.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(GranuleSet {
        granules,
        source_dims: (grid.n1, grid.n2),
        attribute_names: train.attribute_names.clone(),
        decision_name: train.decision_name.clone(),
    })
}

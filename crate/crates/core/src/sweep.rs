//! Parameter-grid experiments over the coupled loop.
//!
//! Every `(cell, repeat)` pair is an independent run whose seed is derived
//! from the base seed and the two indices, so results are identical whether
//! the grid is executed sequentially or in parallel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::dynamics::{
    order_metrics, run_loop, validate_schedule, LoopConfig, NfisLayer, NoiseParams, OrderMetrics,
    Regime, RegimeThresholds, RstLayer, SecondLayer, System, Trajectory,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub system: System,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Rule caps (fuzzy layer) or bin counts (rough layer).
    pub extras: Vec<usize>,
    pub repeats: usize,
    pub base: LoopConfig,
    pub burn_in: usize,
    pub thresholds: RegimeThresholds,
    pub keep_trajectories: bool,
    /// Run cells on the rayon pool when the `parallel` feature is enabled.
    pub parallel: bool,
}

impl SweepSpec {
    /// One-cell grid around `p` with the base configuration's rule cap.
    pub fn single(system: System, base: LoopConfig, p: NoiseParams, extra: usize) -> Self {
        Self {
            system,
            alphas: vec![p.alpha],
            betas: vec![p.beta],
            gammas: vec![p.gamma],
            extras: vec![extra],
            repeats: 1,
            base,
            burn_in: 0,
            thresholds: RegimeThresholds::default(),
            keep_trajectories: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.gammas.is_empty() || self.extras.is_empty() {
            return Err(Error::param("every sweep grid list must be non-empty"));
        }
        if self.repeats == 0 {
            return Err(Error::param("repeats must be at least 1"));
        }
        if self.burn_in >= self.base.iterations {
            return Err(Error::param("burn_in must be smaller than iterations"));
        }
        self.base.validate()
    }

    /// Grid cells in row-major order: alpha, beta, gamma, extra.
    pub fn cells(&self) -> Vec<CellParams> {
        let mut out = Vec::with_capacity(
            self.alphas.len() * self.betas.len() * self.gammas.len() * self.extras.len(),
        );
        for &alpha in &self.alphas {
            for &beta in &self.betas {
                for &gamma in &self.gammas {
                    for &extra in &self.extras {
                        out.push(CellParams {
                            alpha,
                            beta,
                            gamma,
                            extra,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub extra: usize,
}

impl CellParams {
    pub fn noise(&self) -> NoiseParams {
        NoiseParams::new(self.alpha, self.beta, self.gamma)
    }

    pub fn axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Alpha => self.alpha,
            Axis::Beta => self.beta,
            Axis::Gamma => self.gamma,
            Axis::Extra => self.extra as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Alpha,
    Beta,
    Gamma,
    Extra,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Axis::Alpha),
            "beta" => Ok(Axis::Beta),
            "gamma" => Ok(Axis::Gamma),
            "extra" | "n_rules" | "bins" => Ok(Axis::Extra),
            other => Err(Error::UnknownAxis(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub metrics: Option<OrderMetrics>,
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean_ng: f64,
    /// Spread of `mean_ng` across repeats.
    pub mean_ng_std: f64,
    /// Average within-run fluctuation amplitude.
    pub std_ng: f64,
    pub mean_e: f64,
    pub mean_e_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}

impl Aggregate {
    fn of(metrics: &[&OrderMetrics]) -> Option<Self> {
        if metrics.is_empty() {
            return None;
        }
        let ng: Vec<f64> = metrics.iter().map(|m| m.mean_ng).collect();
        let sd: Vec<f64> = metrics.iter().map(|m| m.std_ng).collect();
        let e: Vec<f64> = metrics.iter().map(|m| m.mean_e).collect();
        let (mean_ng, mean_ng_std) = mean_std(&ng);
        let (mean_e, mean_e_std) = mean_std(&e);
        Some(Self {
            runs: metrics.len(),
            mean_ng,
            mean_ng_std,
            std_ng: mean_std(&sd).0,
            mean_e,
            mean_e_std,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub params: CellParams,
    pub repeats: Vec<RepeatResult>,
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub system: System,
    pub burn_in: usize,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.repeats.iter().map(move |r| SweepRow {
                    params: c.params,
                    repeat: r.repeat,
                    metrics: r.metrics.map(|m| RowMetrics {
                        mean_ng: m.mean_ng,
                        std_ng: m.std_ng,
                        mean_e: m.mean_e,
                        regime: m.regime,
                    }),
                })
            })
            .collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        rows_to_csv(&self.rows())
    }

    /// Full trajectories per cell and repeat (empty unless retained).
    pub fn trajectories_json(&self) -> Result<String> {
        let dump: Vec<serde_json::Value> = self
            .cells
            .iter()
            .flat_map(|c| {
                c.repeats.iter().filter_map(move |r| {
                    r.trajectory.as_ref().map(|t| {
                        serde_json::json!({
                            "cell": c.index,
                            "repeat": r.repeat,
                            "params": c.params,
                            "points": t.points,
                        })
                    })
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(&dump)?)
    }
}

fn job_seed(base: u64, cell: usize, repeat: usize) -> u64 {
    seed::derive(base, &[cell as u64, repeat as u64])
}

fn run_job<L, F>(
    spec: &SweepSpec,
    train: &Dataset,
    test: &Dataset,
    make_layer: &F,
    cell: &CellParams,
    cell_idx: usize,
    repeat: usize,
) -> RepeatResult
where
    L: SecondLayer,
    F: Fn(&CellParams, &LoopConfig) -> Result<L>,
{
    let seed = job_seed(spec.base.seed, cell_idx, repeat);
    let mut cfg = spec.base.clone();
    cfg.seed = seed;
    if spec.system == System::Sonfis {
        cfg.n_rules = cell.extra;
    }
    let outcome = make_layer(cell, &cfg).and_then(|mut layer| {
        let traj = run_loop(train, test, &cfg, &cell.noise(), spec.system, &mut layer)?;
        let m = order_metrics(&traj, spec.burn_in, &spec.thresholds)?;
        Ok((traj, m))
    });
    match outcome {
        Ok((traj, m)) => RepeatResult {
            repeat,
            seed,
            metrics: Some(m),
            error: None,
            trajectory: spec.keep_trajectories.then_some(traj),
        },
        Err(e) => RepeatResult {
            repeat,
            seed,
            metrics: None,
            error: Some(e.to_string()),
            trajectory: None,
        },
    }
}

/// Run the grid with a caller-supplied second layer. Per-run failures are
/// recorded in their cell; only an invalid spec aborts the sweep.
pub fn run_sweep_with<L, F>(
    spec: &SweepSpec,
    train: &Dataset,
    test: &Dataset,
    make_layer: F,
) -> Result<SweepResult>
where
    L: SecondLayer,
    F: Fn(&CellParams, &LoopConfig) -> Result<L> + Sync,
{
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.repeats).map(move |r| (c, r)))
        .collect();
    let work = |&(c, r): &(usize, usize)| run_job(spec, train, test, &make_layer, &cells[c], c, r);

    #[cfg(feature = "parallel")]
    let results: Vec<RepeatResult> = if spec.parallel {
        use rayon::prelude::*;
        jobs.par_iter().map(work).collect()
    } else {
        jobs.iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<RepeatResult> = jobs.iter().map(work).collect();

    let mut results = results.into_iter();
    let cells = cells
        .into_iter()
        .enumerate()
        .map(|(index, params)| {
            let repeats: Vec<RepeatResult> = results.by_ref().take(spec.repeats).collect();
            let ok: Vec<&OrderMetrics> = repeats.iter().filter_map(|r| r.metrics.as_ref()).collect();
            CellResult {
                index,
                params,
                aggregate: Aggregate::of(&ok),
                repeats,
            }
        })
        .collect();
    Ok(SweepResult {
        system: spec.system,
        burn_in: spec.burn_in,
        cells,
    })
}

pub fn run_sweep(spec: &SweepSpec, train: &Dataset, test: &Dataset) -> Result<SweepResult> {
    match spec.system {
        System::Sonfis => run_sweep_with(spec, train, test, |cell, cfg| {
            Ok(NfisLayer::new(cell.extra, cfg.nfis))
        }),
        System::Sorst => run_sweep_with(spec, train, test, |cell, cfg| {
            validate_schedule(&[cell.extra], cfg.iterations)?;
            Ok(RstLayer::new(vec![cell.extra], cfg.decision_bins))
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub mean_ng: f64,
    pub std_ng: f64,
    pub mean_e: f64,
    pub regime: Regime,
}

/// One `(cell, repeat)` line of the long-format sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: CellParams,
    pub repeat: usize,
    /// `None` for a failed run.
    pub metrics: Option<RowMetrics>,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "alpha", "beta", "gamma", "extra", "repeat", "mean_NG", "std_NG", "mean_E", "regime",
];

const FAILED: &str = "failed";

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let p = &r.params;
        let (ng, sd, e, regime) = match &r.metrics {
            Some(m) => (
                m.mean_ng.to_string(),
                m.std_ng.to_string(),
                m.mean_e.to_string(),
                m.regime.as_str().to_owned(),
            ),
            None => (String::new(), String::new(), String::new(), FAILED.to_owned()),
        };
        w.write_record([
            p.alpha.to_string(),
            p.beta.to_string(),
            p.gamma.to_string(),
            p.extra.to_string(),
            r.repeat.to_string(),
            ng,
            sd,
            e,
            regime,
        ])?;
    }
    crate::error::csv_text(w)
}

pub fn export_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, result.to_csv_string()?).map_err(|e| Error::io(path, e))
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != SWEEP_HEADER {
        return Err(Error::param(format!("unexpected sweep header {header:?}")));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != SWEEP_HEADER.len() {
                return Err(Error::RaggedRow {
                    row,
                    expected: SWEEP_HEADER.len(),
                    found: rec.len(),
                });
            }
            let bad = |j: usize| Error::BadCell {
                row,
                column: SWEEP_HEADER[j].into(),
                value: rec[j].into(),
            };
            let f = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(j));
            let u = |j: usize| rec[j].parse::<usize>().map_err(|_| bad(j));
            let metrics = if &rec[8] == FAILED {
                None
            } else {
                Some(RowMetrics {
                    mean_ng: f(5)?,
                    std_ng: f(6)?,
                    mean_e: f(7)?,
                    regime: rec[8].parse().map_err(|_| bad(8))?,
                })
            };
            Ok(SweepRow {
                params: CellParams {
                    alpha: f(0)?,
                    beta: f(1)?,
                    gamma: f(2)?,
                    extra: u(3)?,
                },
                repeat: u(4)?,
                metrics,
            })
        })
        .collect()
}

pub fn read_sweep_csv(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sweep_csv(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub runs: usize,
    pub mean_ng: f64,
    pub std_ng: f64,
}

/// Largest increase of `std_ng` between consecutive axis values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLocus {
    pub from: f64,
    pub to: f64,
    /// Position of `to` in the profile.
    pub index: usize,
    pub jump: f64,
    /// Jump smaller than 10% of the mean fluctuation amplitude.
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionProfile {
    pub axis: Axis,
    pub points: Vec<ProfilePoint>,
    pub locus: Option<TransitionLocus>,
}

/// Marginalize successful rows onto `axis` (ascending axis values).
pub fn profile_from_rows(rows: &[SweepRow], axis: Axis) -> TransitionProfile {
    let mut values: Vec<f64> = rows.iter().map(|r| r.params.axis(axis)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let points: Vec<ProfilePoint> = values
        .iter()
        .filter_map(|&v| {
            let ms: Vec<&RowMetrics> = rows
                .iter()
                .filter(|r| r.params.axis(axis) == v)
                .filter_map(|r| r.metrics.as_ref())
                .collect();
            if ms.is_empty() {
                return None;
            }
            let n = ms.len() as f64;
            Some(ProfilePoint {
                value: v,
                runs: ms.len(),
                mean_ng: ms.iter().map(|m| m.mean_ng).sum::<f64>() / n,
                std_ng: ms.iter().map(|m| m.std_ng).sum::<f64>() / n,
            })
        })
        .collect();

    let locus = points
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 1, w[1].std_ng - w[0].std_ng))
        .fold(None::<(usize, f64)>, |best, (i, j)| match best {
            Some((_, bj)) if bj >= j => best,
            _ => Some((i, j)),
        })
        .map(|(index, jump)| {
            let mean_std = points.iter().map(|p| p.std_ng).sum::<f64>() / points.len() as f64;
            TransitionLocus {
                from: points[index - 1].value,
                to: points[index].value,
                index,
                jump,
                weak: jump < 0.1 * mean_std,
            }
        });
    TransitionProfile {
        axis,
        points,
        locus,
    }
}

pub fn transition_profile(result: &SweepResult, axis: &str) -> Result<TransitionProfile> {
    let axis: Axis = axis.parse()?;
    Ok(profile_from_rows(&result.rows(), axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, min_max_normalize, split, SplitSpec};
    use crate::dynamics::ConstantError;

    fn data() -> (Dataset, Dataset) {
        let ds = min_max_normalize(&gen_synthetic(80, 0.05, 2).unwrap()).unwrap();
        split(&ds, &SplitSpec { n_train: 60, n_test: 20, shuffle_seed: None }).unwrap()
    }

    fn stub_spec(alphas: Vec<f64>, gammas: Vec<f64>) -> SweepSpec {
        SweepSpec {
            alphas,
            gammas,
            repeats: 2,
            base: LoopConfig { iterations: 20, ..Default::default() },
            ..SweepSpec::single(System::Sonfis, LoopConfig::default(), NoiseParams::new(0.9, 0.001, 0.5), 2)
        }
    }

    fn stub(_: &CellParams, _: &LoopConfig) -> Result<ConstantError> {
        Ok(ConstantError { error: 10.0, extra: 2 })
    }

    fn row(alpha: f64, std_ng: f64) -> SweepRow {
        SweepRow {
            params: CellParams { alpha, beta: 0.001, gamma: 0.5, extra: 2 },
            repeat: 0,
            metrics: Some(RowMetrics { mean_ng: 5.0, std_ng, mean_e: 0.1, regime: Regime::Laminar }),
        }
    }

    #[test]
    fn shape_contract() {
        let (train, test) = data();
        let spec = SweepSpec { repeats: 3, ..stub_spec(vec![0.5, 0.6, 0.7, 0.8, 0.9], vec![0.5]) };
        let res = run_sweep_with(&spec, &train, &test, stub).unwrap();
        assert_eq!(res.cells.len(), 5);
        assert!(res.cells.iter().all(|c| c.repeats.len() == 3 && c.aggregate.is_some()));
        let csv = res.to_csv_string().unwrap();
        assert_eq!(csv.lines().count(), 16);
        assert_eq!(csv.lines().next().unwrap(), "alpha,beta,gamma,extra,repeat,mean_NG,std_NG,mean_E,regime");
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let (train, test) = data();
        let spec = SweepSpec {
            system: System::Sonfis,
            base: LoopConfig { iterations: 4, initial_n: 9, ..Default::default() },
            ..stub_spec(vec![0.8, 0.9], vec![0.5, 1.0])
        };
        let par = run_sweep(&spec, &train, &test).unwrap();
        let seq = run_sweep(&SweepSpec { parallel: false, ..spec.clone() }, &train, &test).unwrap();
        assert_eq!(par, seq);
        assert_eq!(par, run_sweep(&spec, &train, &test).unwrap());
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let (train, test) = data();
        let spec = stub_spec(vec![0.9], vec![0.5]);
        let res = run_sweep_with(&spec, &train, &test, |_, _| -> Result<ConstantError> {
            Err(Error::param("boom"))
        })
        .unwrap();
        assert!(res.cells[0].aggregate.is_none());
        assert!(res.cells[0].repeats.iter().all(|r| r.error.as_deref() == Some("invalid parameter: boom")));
        let rows = parse_sweep_csv(&res.to_csv_string().unwrap()).unwrap();
        assert!(rows.iter().all(|r| r.metrics.is_none()));
    }

    #[test]
    fn locus_at_largest_gap() {
        let rows: Vec<SweepRow> =
            [(0.7, 1.0), (0.8, 1.0), (0.9, 5.0), (0.95, 5.0)].iter().map(|&(a, s)| row(a, s)).collect();
        let prof = profile_from_rows(&rows, Axis::Alpha);
        let locus = prof.locus.unwrap();
        assert_eq!((locus.from, locus.to, locus.index), (0.8, 0.9, 2));
        assert_eq!(locus.jump, 4.0);
        assert!(!locus.weak);
    }

    #[test]
    fn flat_profile_flags_weak_locus() {
        let rows: Vec<SweepRow> =
            [(0.7, 2.0), (0.8, 2.01), (0.9, 2.0)].iter().map(|&(a, s)| row(a, s)).collect();
        let locus = profile_from_rows(&rows, Axis::Alpha).locus.unwrap();
        assert_eq!(locus.index, 1);
        assert!(locus.weak);
    }

    #[test]
    fn unknown_axis_is_an_error() {
        let res = SweepResult { system: System::Sonfis, burn_in: 0, cells: vec![] };
        assert!(matches!(transition_profile(&res, "delta"), Err(Error::UnknownAxis(_))));
    }

    #[test]
    fn csv_round_trip_preserves_profiles() {
        let (train, test) = data();
        let res = run_sweep_with(&stub_spec(vec![0.7, 0.8, 0.9], vec![0.5, 2.0]), &train, &test, stub).unwrap();
        let rows = parse_sweep_csv(&res.to_csv_string().unwrap()).unwrap();
        assert_eq!(rows, res.rows());
        for axis in [Axis::Alpha, Axis::Gamma] {
            let a = profile_from_rows(&rows, axis);
            let b = transition_profile(&res, if axis == Axis::Alpha { "alpha" } else { "gamma" }).unwrap();
            for (p, q) in a.points.iter().zip(&b.points) {
                assert!((p.mean_ng - q.mean_ng).abs() < 1e-9 && (p.std_ng - q.std_ng).abs() < 1e-9);
            }
        }
    }
}

//! Numeric datasets: CSV ingestion, min-max normalization, train/test
//! splitting and the synthetic surrogate generator.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One data object: condition attributes plus a real-valued decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub inputs: Vec<f64>,
    pub output: f64,
}

impl Record {
    pub fn new(inputs: Vec<f64>, output: f64) -> Self {
        Self { inputs, output }
    }
}

/// Per-attribute `(min, max)` pairs recorded by [`min_max_normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub inputs: Vec<(f64, f64)>,
    pub output: (f64, f64),
}

impl NormParams {
    pub fn denormalize_output(&self, y: f64) -> f64 {
        let (lo, hi) = self.output;
        lo + y * (hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<Record>,
    /// Names of the condition attributes, in input order.
    pub attribute_names: Vec<String>,
    pub decision_name: String,
    pub norm_params: Option<NormParams>,
}

impl Dataset {
    /// Build a dataset, checking arity and finiteness of every record.
    pub fn new(
        records: Vec<Record>,
        attribute_names: Vec<String>,
        decision_name: impl Into<String>,
    ) -> Result<Self> {
        let arity = attribute_names.len();
        for r in &records {
            if r.inputs.len() != arity {
                return Err(Error::Arity {
                    expected: arity,
                    found: r.inputs.len(),
                });
            }
            if !r.output.is_finite() || r.inputs.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("non-finite value in record"));
            }
        }
        Ok(Self {
            records,
            attribute_names,
            decision_name: decision_name.into(),
            norm_params: None,
        })
    }

    /// Dataset with generated attribute names `x1..xn` and decision `y`.
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let arity = records.first().map_or(0, |r| r.inputs.len());
        let names = (1..=arity).map(|i| format!("x{i}")).collect();
        Self::new(records, names, "y")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn outputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.output)
    }

    /// Values of input attribute `j` across all records.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(move |r| r.inputs[j])
    }

    fn with_records(&self, records: Vec<Record>) -> Self {
        Self {
            records,
            attribute_names: self.attribute_names.clone(),
            decision_name: self.decision_name.clone(),
            norm_params: self.norm_params.clone(),
        }
    }

    /// Undo [`min_max_normalize`]. Returns `self` unchanged if the dataset
    /// was never normalized.
    pub fn denormalize(&self) -> Dataset {
        let Some(np) = &self.norm_params else {
            return self.clone();
        };
        let records = self
            .records
            .iter()
            .map(|r| Record {
                inputs: r
                    .inputs
                    .iter()
                    .zip(&np.inputs)
                    .map(|(&v, &(lo, hi))| lo + v * (hi - lo))
                    .collect(),
                output: np.denormalize_output(r.output),
            })
            .collect();
        let mut out = self.with_records(records);
        out.norm_params = None;
        out
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = self.attribute_names.clone();
        header.push(self.decision_name.clone());
        w.write_record(&header)?;
        for r in &self.records {
            let row: Vec<String> = r
                .inputs
                .iter()
                .chain(std::iter::once(&r.output))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row)?;
        }
        crate::error::csv_text(w)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Read a headed CSV file; every non-decision column becomes an input.
pub fn load_csv(path: impl AsRef<Path>, decision_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, decision_column)
}

/// Parse CSV text. Data rows are numbered from 1 in diagnostics.
pub fn parse_csv(text: &str, decision_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let decision_idx = header
        .iter()
        .position(|h| h == decision_column)
        .ok_or_else(|| Error::UnknownColumn(decision_column.to_owned()))?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 1;
        if row.len() != header.len() {
            return Err(Error::RaggedRow {
                row: row_no,
                expected: header.len(),
                found: row.len(),
            });
        }
        let mut inputs = Vec::with_capacity(header.len() - 1);
        let mut output = 0.0;
        for (j, cell) in row.iter().enumerate() {
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row: row_no,
                    column: header[j].clone(),
                    value: cell.to_owned(),
                })?;
            if j == decision_idx {
                output = v;
            } else {
                inputs.push(v);
            }
        }
        records.push(Record { inputs, output });
    }

    let names = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != decision_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(records, names, decision_column)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Affinely map every attribute (inputs and decision) onto `[0, 1]`.
///
/// Values of a dataset that is already normalized are recomposed from the
/// stored parameters, so normalizing twice is the identity.
pub fn min_max_normalize(ds: &Dataset) -> Result<Dataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let range = |name: &str, (lo, hi): (f64, f64)| {
        if hi > lo {
            Ok((lo, hi))
        } else {
            Err(Error::ConstantAttribute(name.to_owned()))
        }
    };
    let inputs = (0..ds.arity())
        .map(|j| range(&ds.attribute_names[j], min_max(ds.column(j))))
        .collect::<Result<Vec<_>>>()?;
    let output = range(&ds.decision_name, min_max(ds.outputs()))?;

    let scale = |v: f64, (lo, hi): (f64, f64)| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    let records = ds
        .records
        .iter()
        .map(|r| Record {
            inputs: r
                .inputs
                .iter()
                .zip(&inputs)
                .map(|(&v, &p)| scale(v, p))
                .collect(),
            output: scale(r.output, output),
        })
        .collect();

    // Compose with any earlier normalization so de-normalizing still
    // recovers the raw values.
    let params = match &ds.norm_params {
        None => NormParams { inputs, output },
        Some(prev) => {
            let compose = |(plo, phi): (f64, f64), (lo, hi): (f64, f64)| {
                let w = phi - plo;
                (plo + lo * w, plo + hi * w)
            };
            NormParams {
                inputs: prev
                    .inputs
                    .iter()
                    .zip(&inputs)
                    .map(|(&p, &c)| compose(p, c))
                    .collect(),
                output: compose(prev.output, output),
            }
        }
    };
    let mut out = ds.with_records(records);
    out.norm_params = Some(params);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// `None` gives a contiguous split: first `n_train`, then `n_test`.
    pub shuffle_seed: Option<u64>,
}

impl SplitSpec {
    pub fn validate(&self, size: usize) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidSplit(
                "n_train and n_test must both be at least 1".into(),
            ));
        }
        if self.n_train + self.n_test > size {
            return Err(Error::InvalidSplit(format!(
                "{} + {} exceeds dataset size {size}",
                self.n_train, self.n_test
            )));
        }
        Ok(())
    }

    /// Record indices for the train and test parts.
    pub fn indices(&self, size: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate(size)?;
        let mut order: Vec<usize> = (0..size).collect();
        if let Some(s) = self.shuffle_seed {
            order.shuffle(&mut seed::rng(s));
        }
        let test = order[self.n_train..self.n_train + self.n_test].to_vec();
        order.truncate(self.n_train);
        Ok((order, test))
    }
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = spec.indices(ds.len())?;
    let pick = |idx: &[usize]| ds.with_records(idx.iter().map(|&i| ds.records[i].clone()).collect());
    Ok((pick(&train), pick(&test)))
}

/// Noise-free surrogate target `0.5 sin(2 pi x1) x2 + x3^2`.
pub fn surrogate_target(x: &[f64]) -> f64 {
    0.5 * (2.0 * PI * x[0]).sin() * x[1] + x[2] * x[2]
}

/// Three uniform inputs on `[0, 1]` and the surrogate target plus Gaussian
/// noise of standard deviation `noise_sd`.
pub fn gen_synthetic(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::param("noise_sd must be finite and non-negative"));
    }
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::param(e.to_string()))?;
    let records = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let y = surrogate_target(&x) + if noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            Record::new(x, y)
        })
        .collect();
    Dataset::new(
        records,
        vec!["x1".into(), "x2".into(), "x3".into()],
        "y",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parses_three_columns() {
        let ds = parse_csv("a,b,q\n1,2,3\n4,5,6\n", "q").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.arity(), 2);
        assert_eq!(ds.records[1], Record::new(vec![4.0, 5.0], 6.0));
        assert_eq!(ds.attribute_names, ["a", "b"]);
    }

    #[test]
    fn decision_first_keeps_remaining_order() {
        let ds = parse_csv("q,a,b\n3,1,2\n", "q").unwrap();
        assert_eq!(ds.attribute_names, ["a", "b"]);
        assert_eq!(ds.records[0], Record::new(vec![1.0, 2.0], 3.0));
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let text = "a,q\n1,1\n2,2\n3,3\n4,4\nNaN,5\n";
        match parse_csv(text, "q") {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 5);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = parse_csv(text, "q").unwrap_err().to_string();
        assert!(msg.contains("row 5") && msg.contains("\"a\""), "{msg}");
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_csv("a,b\n1,2\n", "z"), Err(Error::UnknownColumn(_))));
        assert!(matches!(
            parse_csv("a,b\n1,2\n3\n", "b"),
            Err(Error::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(
            parse_csv("a,b\n1,x\n", "b"),
            Err(Error::BadCell { row: 1, .. })
        ));
        assert!(matches!(load_csv("/nonexistent/file.csv", "b"), Err(Error::Io { .. })));
    }

    #[test]
    fn normalize_affine() {
        let ds = Dataset::from_records(vec![
            Record::new(vec![2.0], 0.0),
            Record::new(vec![4.0], 1.0),
            Record::new(vec![6.0], 0.5),
        ])
        .unwrap();
        let n = min_max_normalize(&ds).unwrap();
        let col: Vec<f64> = n.column(0).collect();
        assert_eq!(col, [0.0, 0.5, 1.0]);
        assert_eq!(n.norm_params.as_ref().unwrap().inputs[0], (2.0, 6.0));
    }

    #[test]
    fn normalize_unit_data_is_identity() {
        let ds = Dataset::from_records(vec![
            Record::new(vec![0.0, 1.0], 0.0),
            Record::new(vec![1.0, 0.25], 1.0),
            Record::new(vec![0.5, 0.0], 0.3),
        ])
        .unwrap();
        let n = min_max_normalize(&ds).unwrap();
        assert_eq!(n.records, ds.records);
        let p = n.norm_params.unwrap();
        assert_eq!(p.inputs, [(0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(p.output, (0.0, 1.0));
    }

    #[test]
    fn normalize_rejects_constant_attribute() {
        let ds = Dataset::new(
            vec![
                Record::new(vec![5.0], 0.0),
                Record::new(vec![5.0], 1.0),
                Record::new(vec![5.0], 2.0),
            ],
            vec!["depth".into()],
            "lu",
        )
        .unwrap();
        let err = min_max_normalize(&ds).unwrap_err();
        assert!(matches!(&err, Error::ConstantAttribute(a) if a == "depth"));
        assert!(err.to_string().contains("constant attribute"));
    }

    #[test]
    fn split_sizes_and_errors() {
        let ds = gen_synthetic(693, 0.0, 1).unwrap();
        let spec = SplitSpec { n_train: 600, n_test: 93, shuffle_seed: Some(3) };
        let (tr, te) = split(&ds, &spec).unwrap();
        assert_eq!((tr.len(), te.len()), (600, 93));

        let bad = SplitSpec { n_train: 693, n_test: 0, shuffle_seed: None };
        assert!(matches!(split(&ds, &bad), Err(Error::InvalidSplit(_))));
        let too_many = SplitSpec { n_train: 650, n_test: 50, shuffle_seed: None };
        assert!(split(&ds, &too_many).is_err());
    }

    #[test]
    fn split_contiguous_without_seed() {
        let ds = gen_synthetic(10, 0.0, 1).unwrap();
        let (tr, te) = split(&ds, &SplitSpec { n_train: 6, n_test: 3, shuffle_seed: None }).unwrap();
        assert_eq!(tr.records[..], ds.records[..6]);
        assert_eq!(te.records[..], ds.records[6..9]);
    }

    #[test]
    fn split_same_seed_same_result() {
        let ds = gen_synthetic(50, 0.1, 1).unwrap();
        let spec = SplitSpec { n_train: 30, n_test: 20, shuffle_seed: Some(99) };
        assert_eq!(split(&ds, &spec).unwrap(), split(&ds, &spec).unwrap());
    }

    #[test]
    fn surrogate_hand_values() {
        assert_abs_diff_eq!(surrogate_target(&[0.25, 1.0, 0.0]), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(surrogate_target(&[0.0, 0.7, 0.5]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic(693, 0.05, 7).unwrap();
        let b = gen_synthetic(693, 0.05, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arity(), 3);
        assert!(a.records.iter().all(|r| r.inputs.iter().all(|v| (0.0..=1.0).contains(v))));
        assert_ne!(a, gen_synthetic(693, 0.05, 8).unwrap());
    }

    #[test]
    fn noiseless_synthetic_matches_target() {
        let ds = gen_synthetic(100, 0.0, 3).unwrap();
        for r in &ds.records {
            assert_eq!(r.output, surrogate_target(&r.inputs));
        }
    }

    #[test]
    fn csv_round_trip() {
        let ds = gen_synthetic(20, 0.1, 2).unwrap();
        let back = parse_csv(&ds.to_csv_string().unwrap(), "y").unwrap();
        assert_eq!(back, ds);
    }
}

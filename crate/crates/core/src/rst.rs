//! Rough-set layer: adaptive scaling of continuous attributes with 1-D SOMs,
//! decision tables, lower/upper approximations, dependency degree, rule
//! induction and classification.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record};
use crate::error::{Error, Result};
use crate::som::{train_from, SomGrid, SomParams};

pub type ObjectSet = BTreeSet<usize>;

/// Bin count per condition attribute plus one for the decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinCounts {
    pub inputs: Vec<usize>,
    pub decision: usize,
}

impl BinCounts {
    pub fn uniform(arity: usize, bins: usize) -> Self {
        Self {
            inputs: vec![bins; arity],
            decision: bins,
        }
    }
}

/// Sorted codebooks, one per condition attribute and one for the decision.
/// Label `k` is the `k`-th smallest center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub attribute_names: Vec<String>,
    pub decision_name: String,
    pub inputs: Vec<Vec<f64>>,
    pub decision: Vec<f64>,
}

/// Nearest-center label; equidistant values take the lower label.
pub fn label_of(codebook: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, &c) in codebook.iter().enumerate() {
        let d = (v - c).abs();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

impl ScalingMap {
    pub fn arity(&self) -> usize {
        self.inputs.len()
    }

    pub fn discretize(&self, x: &[f64]) -> Vec<usize> {
        x.iter()
            .zip(&self.inputs)
            .map(|(&v, cb)| label_of(cb, v))
            .collect()
    }

    pub fn decision_label(&self, y: f64) -> usize {
        label_of(&self.decision, y)
    }

    pub fn bin_counts(&self) -> BinCounts {
        BinCounts {
            inputs: self.inputs.iter().map(Vec::len).collect(),
            decision: self.decision.len(),
        }
    }
}

fn fit_codebook(name: &str, values: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(Error::param(format!("{name}: at least 2 bins required")));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::ConstantAttribute(name.to_owned()));
    }
    let scalar = Dataset::from_records(values.iter().map(|&v| Record::new(vec![v], v)).collect())?;
    // Evenly spaced start keeps the chain ordered and free of duplicates.
    let start = SomGrid {
        n1: 1,
        n2: bins,
        prototypes: (0..bins)
            .map(|k| vec![lo + (hi - lo) * k as f64 / (bins - 1) as f64])
            .collect(),
        hit_counts: vec![0; bins],
    };
    let grid = train_from(start, &scalar, &SomParams::default())?;
    let mut cb: Vec<f64> = grid.prototypes.into_iter().map(|p| p[0]).collect();
    cb.sort_by(f64::total_cmp);
    cb.dedup();
    if cb.len() < 2 {
        return Err(Error::param(format!("{name}: scaling collapsed to one bin")));
    }
    Ok(cb)
}

/// Train a 1-D batch SOM per attribute and sort its codebook.
pub fn fit_scaling(train: &Dataset, bins: &BinCounts) -> Result<ScalingMap> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bins.inputs.len() != train.arity() {
        return Err(Error::Arity {
            expected: train.arity(),
            found: bins.inputs.len(),
        });
    }
    let inputs = (0..train.arity())
        .map(|j| {
            let vals: Vec<f64> = train.column(j).collect();
            fit_codebook(
                &train.attribute_names[j],
                &vals,
                bins.inputs[j],
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let outs: Vec<f64> = train.outputs().collect();
    let decision = fit_codebook(
        &train.decision_name,
        &outs,
        bins.decision,
    )?;
    Ok(ScalingMap {
        attribute_names: train.attribute_names.clone(),
        decision_name: train.decision_name.clone(),
        inputs,
        decision,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableRow {
    pub conditions: Vec<usize>,
    pub decision: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub objects: Vec<TableRow>,
    pub bin_counts: Vec<usize>,
    pub decision_bins: usize,
}

impl DecisionTable {
    /// Table from raw labels; checks every label against its bin count.
    pub fn new(objects: Vec<TableRow>, bin_counts: Vec<usize>, decision_bins: usize) -> Result<Self> {
        for o in &objects {
            if o.conditions.len() != bin_counts.len() {
                return Err(Error::Arity {
                    expected: bin_counts.len(),
                    found: o.conditions.len(),
                });
            }
            let bad = o.conditions.iter().zip(&bin_counts).any(|(l, b)| l >= b)
                || o.decision >= decision_bins;
            if bad {
                return Err(Error::param("label out of range for its bin count"));
            }
        }
        Ok(Self {
            objects,
            bin_counts,
            decision_bins,
        })
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn n_attributes(&self) -> usize {
        self.bin_counts.len()
    }

    pub fn universe(&self) -> ObjectSet {
        (0..self.len()).collect()
    }

    /// Objects grouped by decision label, in ascending label order.
    pub fn decision_classes(&self) -> Vec<ObjectSet> {
        let mut by: Vec<ObjectSet> = vec![ObjectSet::new(); self.decision_bins];
        for (i, o) in self.objects.iter().enumerate() {
            by[o.decision].insert(i);
        }
        by.into_iter().filter(|c| !c.is_empty()).collect()
    }
}

pub fn apply_scaling(map: &ScalingMap, ds: &Dataset) -> Result<DecisionTable> {
    if ds.arity() != map.arity() {
        return Err(Error::Arity {
            expected: map.arity(),
            found: ds.arity(),
        });
    }
    let objects = ds
        .records
        .iter()
        .map(|r| TableRow {
            conditions: map.discretize(&r.inputs),
            decision: map.decision_label(r.output),
        })
        .collect();
    Ok(DecisionTable {
        objects,
        bin_counts: map.inputs.iter().map(Vec::len).collect(),
        decision_bins: map.decision.len(),
    })
}

/// Equivalence classes of the indiscernibility relation on `attrs`.
/// Blocks are listed by their smallest member; members ascend.
pub fn indiscernibility_partition(table: &DecisionTable, attrs: &[usize]) -> Vec<Vec<usize>> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for (i, o) in table.objects.iter().enumerate() {
        let key: Vec<usize> = attrs.iter().map(|&a| o.conditions[a]).collect();
        let b = *index.entry(key).or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[b].push(i);
    }
    blocks
}

/// Lower and upper approximation of `concept` under the partition on `attrs`.
pub fn approximations(
    table: &DecisionTable,
    attrs: &[usize],
    concept: &ObjectSet,
) -> (ObjectSet, ObjectSet) {
    let mut lower = ObjectSet::new();
    let mut upper = ObjectSet::new();
    for block in indiscernibility_partition(table, attrs) {
        let inside = block.iter().filter(|i| concept.contains(i)).count();
        if inside == block.len() {
            lower.extend(&block);
        }
        if inside > 0 {
            upper.extend(&block);
        }
    }
    (lower, upper)
}

/// Positive region of the decision under `conds`.
/// Blocks that are pure in the decision are exactly the blocks contained in
/// some decision class's lower approximation.
pub fn positive_region(table: &DecisionTable, conds: &[usize]) -> ObjectSet {
    indiscernibility_partition(table, conds)
        .into_iter()
        .filter(|block| {
            let d = table.objects[block[0]].decision;
            block.iter().all(|&i| table.objects[i].decision == d)
        })
        .flatten()
        .collect()
}

/// Fraction of objects in the positive region.
pub fn dependency_degree(table: &DecisionTable, conds: &[usize]) -> f64 {
    if table.is_empty() {
        return 0.0;
    }
    positive_region(table, conds).len() as f64 / table.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    /// Required label for each condition attribute, by attribute index.
    pub descriptors: Vec<usize>,
    pub decision: usize,
    pub support: usize,
    pub certain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<DecisionRule>,
    pub scaling: ScalingMap,
    pub default_decision: usize,
}

/// One rule per distinct condition pattern. Conflicting patterns yield a
/// possible rule that takes the highest decision label among its objects.
pub fn induce_rules(table: &DecisionTable, scaling: &ScalingMap) -> Result<RuleSet> {
    if table.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let all: Vec<usize> = (0..table.n_attributes()).collect();
    let rules = indiscernibility_partition(table, &all)
        .into_iter()
        .map(|block| {
            let decisions: BTreeSet<usize> =
                block.iter().map(|&i| table.objects[i].decision).collect();
            DecisionRule {
                descriptors: table.objects[block[0]].conditions.clone(),
                decision: *decisions.last().expect("blocks are non-empty"),
                support: block.len(),
                certain: decisions.len() == 1,
            }
        })
        .collect();

    let mut votes = vec![0usize; table.decision_bins];
    for o in &table.objects {
        votes[o.decision] += 1;
    }
    // max_by_key keeps the last maximum, i.e. the higher label on ties.
    let default_decision = votes
        .iter()
        .enumerate()
        .max_by_key(|&(_, v)| *v)
        .map_or(0, |(k, _)| k);

    Ok(RuleSet {
        rules,
        scaling: scaling.clone(),
        default_decision,
    })
}

fn hamming(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

impl RuleSet {
    /// Decision label for an already-discretized pattern.
    pub fn classify_pattern(&self, pattern: &[usize]) -> usize {
        self.rules
            .iter()
            .min_by(|a, b| {
                hamming(&a.descriptors, pattern)
                    .cmp(&hamming(&b.descriptors, pattern))
                    .then(b.support.cmp(&a.support))
                    .then(b.decision.cmp(&a.decision))
            })
            .map_or(self.default_decision, |r| r.decision)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Human-readable rules, e.g. `IF x1=low AND x2=high THEN y=middle`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            let conds: Vec<String> = r
                .descriptors
                .iter()
                .enumerate()
                .map(|(j, &l)| {
                    format!(
                        "{}={}",
                        self.scaling.attribute_names[j],
                        bin_name(l, self.scaling.inputs[j].len())
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                "IF {} THEN {}={}  [support={}, {}]",
                conds.join(" AND "),
                self.scaling.decision_name,
                bin_name(r.decision, self.scaling.decision.len()),
                r.support,
                if r.certain { "certain" } else { "possible" }
            );
        }
        out
    }
}

/// Ordinal bin name for up to five bins, otherwise `b<label>`.
pub fn bin_name(label: usize, bins: usize) -> String {
    let names: &[&str] = match bins {
        2 => &["low", "high"],
        3 => &["low", "middle", "high"],
        4 => &["very_low", "low", "high", "very_high"],
        5 => &["very_low", "low", "middle", "high", "very_high"],
        _ => &[],
    };
    names
        .get(label)
        .map_or_else(|| format!("b{label}"), |s| (*s).to_owned())
}

pub fn classify(rules: &RuleSet, x: &[f64]) -> usize {
    rules.classify_pattern(&rules.scaling.discretize(x))
}

/// Mean squared difference between true and classified decision labels.
pub fn mse(rules: &RuleSet, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test.arity() != rules.scaling.arity() {
        return Err(Error::Arity {
            expected: rules.scaling.arity(),
            found: test.arity(),
        });
    }
    let sum: f64 = test
        .records
        .iter()
        .map(|r| {
            let real = rules.scaling.decision_label(r.output) as f64;
            let got = classify(rules, &r.inputs) as f64;
            (real - got).powi(2)
        })
        .sum();
    Ok(sum / test.len() as f64)
}

//! First-order Takagi–Sugeno inference over SOM granules.
//!
//! Rules carry Gaussian premises (one center and width per input) and a
//! linear consequent. Training alternates an exact least-squares solve for
//! the consequents with a gradient step on the premises.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;
use crate::som::GranuleSet;

/// Width floor applied when rules are initialized from clusters.
pub const INIT_WIDTH_FLOOR: f64 = 0.1;
/// Width floor re-applied after every premise update.
pub const TRAIN_WIDTH_FLOOR: f64 = 0.01;

const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    /// Linear coefficients, one per input.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl FuzzyRule {
    /// Unnormalized firing strength (product of Gaussian memberships).
    pub fn firing(&self, x: &[f64]) -> f64 {
        let e: f64 = x
            .iter()
            .zip(&self.centers)
            .zip(&self.widths)
            .map(|((xj, c), s)| (xj - c) * (xj - c) / (2.0 * s * s))
            .sum();
        (-e).exp()
    }

    pub fn consequent(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(a, xj)| a * xj)
                .sum::<f64>()
    }

    fn center_dist2(&self, x: &[f64]) -> f64 {
        self.centers.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRuleBase {
    pub rules: Vec<FuzzyRule>,
    pub n_rules: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NfisTrainParams {
    pub epochs: usize,
    pub premise_learning_rate: f64,
    pub seed: u64,
}

impl Default for NfisTrainParams {
    fn default() -> Self {
        Self {
            epochs: 10,
            premise_learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl NfisTrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::param("nfis.epochs must be at least 1"));
        }
        if !(self.premise_learning_rate > 0.0 && self.premise_learning_rate.is_finite()) {
            return Err(Error::param("nfis.premise_learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Gradient of the mean squared granule error with respect to the premises.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiseGradient {
    pub centers: Vec<Vec<f64>>,
    pub widths: Vec<Vec<f64>>,
}

impl FuzzyRuleBase {
    pub fn arity(&self) -> usize {
        self.rules.first().map_or(0, |r| r.centers.len())
    }

    fn nearest_rule(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, r) in self.rules.iter().enumerate() {
            let d = r.center_dist2(x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Normalized firing strengths, or `None` when every strength underflows.
    pub fn normalized_weights(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w: Vec<f64> = self.rules.iter().map(|r| r.firing(x)).collect();
        let s: f64 = w.iter().sum();
        (s > 0.0).then(|| w.into_iter().map(|wi| wi / s).collect())
    }

    /// Weights actually used for inference: normalized strengths, or a
    /// one-hot on the nearest center when they underflow.
    fn effective_weights(&self, x: &[f64]) -> Vec<f64> {
        self.normalized_weights(x).unwrap_or_else(|| {
            let mut w = vec![0.0; self.rules.len()];
            w[self.nearest_rule(x)] = 1.0;
            w
        })
    }

    pub fn infer(&self, x: &[f64]) -> f64 {
        self.effective_weights(x)
            .iter()
            .zip(&self.rules)
            .map(|(w, r)| w * r.consequent(x))
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_arity(granules: &GranuleSet, expected: usize) -> Result<()> {
    match granules.granules.iter().find(|g| g.inputs.len() != expected) {
        Some(g) => Err(Error::Arity {
            expected,
            found: g.inputs.len(),
        }),
        None => Ok(()),
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(c, x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Seeded Lloyd iterations. Empty clusters are reseeded with the point that
/// lies farthest from its own center. Returns `(centers, assignment)`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    assert!(k >= 1 && k <= points.len(), "k must lie in 1..=points");
    let dim = points[0].len();
    let mut rng = seed::rng(seed);
    let mut centers: Vec<Vec<f64>> = index::sample(&mut rng, points.len(), k)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(&centers, p)).collect();

    for _ in 0..KMEANS_MAX_ITER {
        // Reseed empties before recomputing means.
        let mut moved: Vec<bool> = vec![false; points.len()];
        for c in 0..k {
            if assign.contains(&c) {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| !moved[i])
                .max_by(|&a, &b| {
                    let da = dist2(&points[a], &centers[assign[a]]);
                    let db = dist2(&points[b], &centers[assign[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                });
            if let Some(i) = far {
                centers[c] = points[i].clone();
                assign[i] = c;
                moved[i] = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|&(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (j, v) in center.iter_mut().enumerate().take(dim) {
                *v = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centers, p)).collect();
        let empty = (0..k).any(|c| !next.contains(&c));
        if next == assign && !empty {
            break;
        }
        assign = next;
    }
    (centers, assign)
}

/// Rule premises from k-means over granule inputs; widths are the
/// per-dimension spread of each cluster (floored); consequents start at zero.
pub fn init_rulebase(granules: &GranuleSet, n_rules: usize, seed: u64) -> Result<FuzzyRuleBase> {
    if n_rules == 0 {
        return Err(Error::param("n_rules must be at least 1"));
    }
    if granules.len() < n_rules {
        return Err(Error::TooFewGranules {
            granules: granules.len(),
            rules: n_rules,
        });
    }
    let dim = granules.granules[0].inputs.len();
    check_arity(granules, dim)?;
    let points: Vec<Vec<f64>> = granules.granules.iter().map(|g| g.inputs.clone()).collect();
    let (centers, assign) = kmeans(&points, n_rules, seed);

    let rules = centers
        .into_iter()
        .enumerate()
        .map(|(c, center)| {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|&(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            let widths = (0..dim)
                .map(|j| {
                    let m = members.len() as f64;
                    let sd = if members.is_empty() {
                        0.0
                    } else {
                        let mean = members.iter().map(|p| p[j]).sum::<f64>() / m;
                        (members.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / m).sqrt()
                    };
                    sd.max(INIT_WIDTH_FLOOR)
                })
                .collect();
            FuzzyRule {
                centers: center,
                widths,
                coefficients: vec![0.0; dim],
                intercept: 0.0,
            }
        })
        .collect();
    Ok(FuzzyRuleBase { rules, n_rules })
}

/// Solve the consequents exactly by least squares with premises fixed.
/// Rank-deficient systems get the minimum-norm solution.
pub fn fit_consequents(fis: &mut FuzzyRuleBase, granules: &GranuleSet) -> Result<()> {
    if granules.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = fis.arity();
    check_arity(granules, dim)?;
    let per_rule = dim + 1;
    let cols = fis.rules.len() * per_rule;
    let rows = granules.len();
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    for (g_idx, g) in granules.granules.iter().enumerate() {
        let w = fis.effective_weights(&g.inputs);
        for (i, wi) in w.iter().enumerate() {
            for j in 0..dim {
                a[(g_idx, i * per_rule + j)] = wi * g.inputs[j];
            }
            a[(g_idx, i * per_rule + dim)] = *wi;
        }
        b[g_idx] = g.decision;
    }

    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let eps = max_sv * f64::EPSILON * rows.max(cols) as f64;
    let theta = svd
        .solve(&b, eps.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::param(format!("least squares failed: {e}")))?;

    for (i, rule) in fis.rules.iter_mut().enumerate() {
        for j in 0..dim {
            rule.coefficients[j] = theta[i * per_rule + j];
        }
        rule.intercept = theta[i * per_rule + dim];
    }
    Ok(())
}

/// Mean squared error of the rule base over the granules.
pub fn granule_mse(fis: &FuzzyRuleBase, granules: &GranuleSet) -> f64 {
    let m = granules.len() as f64;
    granules
        .granules
        .iter()
        .map(|g| (fis.infer(&g.inputs) - g.decision).powi(2))
        .sum::<f64>()
        / m
}

/// Analytic gradient of [`granule_mse`] with respect to centers and widths.
/// Granules whose strengths all underflow contribute nothing.
pub fn premise_gradient(fis: &FuzzyRuleBase, granules: &GranuleSet) -> PremiseGradient {
    let dim = fis.arity();
    let n = fis.rules.len();
    let mut gc = vec![vec![0.0; dim]; n];
    let mut gs = vec![vec![0.0; dim]; n];
    let m = granules.len() as f64;
    for g in &granules.granules {
        let Some(wbar) = fis.normalized_weights(&g.inputs) else {
            continue;
        };
        let f: Vec<f64> = fis.rules.iter().map(|r| r.consequent(&g.inputs)).collect();
        let y_hat: f64 = wbar.iter().zip(&f).map(|(w, fi)| w * fi).sum();
        let outer = 2.0 * (y_hat - g.decision) / m;
        for (i, rule) in fis.rules.iter().enumerate() {
            let common = outer * wbar[i] * (f[i] - y_hat);
            for j in 0..dim {
                let d = g.inputs[j] - rule.centers[j];
                let s = rule.widths[j];
                gc[i][j] += common * d / (s * s);
                gs[i][j] += common * d * d / (s * s * s);
            }
        }
    }
    PremiseGradient {
        centers: gc,
        widths: gs,
    }
}

/// Hybrid training: each epoch solves the consequents by least squares and
/// then takes one gradient step on the premises. A closing least-squares
/// pass leaves the consequents optimal for the final premises.
pub fn train_hybrid(
    fis: &FuzzyRuleBase,
    granules: &GranuleSet,
    params: &NfisTrainParams,
) -> Result<FuzzyRuleBase> {
    params.validate()?;
    if granules.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut fis = fis.clone();
    let lr = params.premise_learning_rate;
    for _ in 0..params.epochs {
        fit_consequents(&mut fis, granules)?;
        let grad = premise_gradient(&fis, granules);
        for (i, rule) in fis.rules.iter_mut().enumerate() {
            for j in 0..rule.centers.len() {
                rule.centers[j] -= lr * grad.centers[i][j];
                rule.widths[j] = (rule.widths[j] - lr * grad.widths[i][j]).max(TRAIN_WIDTH_FLOOR);
            }
        }
    }
    fit_consequents(&mut fis, granules)?;
    Ok(fis)
}

/// Root mean square error of the rule base on a held-out set.
pub fn rmse(fis: &FuzzyRuleBase, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test.arity() != fis.arity() {
        return Err(Error::Arity {
            expected: fis.arity(),
            found: test.arity(),
        });
    }
    let residuals = test.records.iter().map(|r| fis.infer(&r.inputs) - r.output);
    Ok(rmse_of(residuals))
}

pub(crate) fn rmse_of(residuals: impl Iterator<Item = f64>) -> f64 {
    let (sum, m) = residuals.fold((0.0, 0usize), |(s, m), r| (s + r * r, m + 1));
    (sum / m as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::som::Granule;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn granules(points: &[(Vec<f64>, f64)]) -> GranuleSet {
        let dim = points[0].0.len();
        GranuleSet {
            granules: points
                .iter()
                .map(|(x, y)| Granule { inputs: x.clone(), decision: *y, support: 1 })
                .collect(),
            source_dims: (1, points.len()),
            attribute_names: (1..=dim).map(|i| format!("x{i}")).collect(),
            decision_name: "y".into(),
        }
    }

    fn rule(c: f64, s: f64, a: f64, b: f64) -> FuzzyRule {
        FuzzyRule { centers: vec![c], widths: vec![s], coefficients: vec![a], intercept: b }
    }

    #[test]
    fn single_rule_is_its_consequent() {
        let fis = FuzzyRuleBase { rules: vec![rule(0.0, 1.0, 2.0, 1.0)], n_rules: 1 };
        assert_eq!(fis.infer(&[3.0]), 7.0);
    }

    #[test]
    fn symmetric_rules_average() {
        let fis = FuzzyRuleBase {
            rules: vec![rule(0.0, 1.0, 0.0, 0.0), rule(2.0, 1.0, 0.0, 10.0)],
            n_rules: 2,
        };
        assert_abs_diff_eq!(fis.infer(&[1.0]), 5.0, epsilon = 1e-12);
        // Hand evaluation of the weighted average at x = 0.5.
        let w1 = (-0.125f64).exp();
        let w2 = (-1.125f64).exp();
        let expected = 10.0 * w2 / (w1 + w2);
        assert_abs_diff_eq!(expected, 2.689414213699951, epsilon = 1e-12);
        assert_abs_diff_eq!(fis.infer(&[0.5]), expected, epsilon = 1e-12);
    }

    #[test]
    fn underflow_falls_back_to_nearest_center() {
        let fis = FuzzyRuleBase {
            rules: vec![rule(0.0, 0.01, 0.0, 1.0), rule(1.0, 0.01, 0.0, 2.0)],
            n_rules: 2,
        };
        assert!(fis.normalized_weights(&[100.0]).is_none());
        assert_eq!(fis.infer(&[100.0]), 2.0);
        assert_eq!(fis.infer(&[-100.0]), 1.0);
    }

    #[test]
    fn init_single_rule_at_centroid() {
        let gs = granules(&[(vec![0.0, 1.0], 0.0), (vec![1.0, 3.0], 0.0), (vec![2.0, 2.0], 0.0)]);
        let fis = init_rulebase(&gs, 1, 4).unwrap();
        assert_eq!(fis.rules.len(), 1);
        assert_abs_diff_eq!(fis.rules[0].centers[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fis.rules[0].centers[1], 2.0, epsilon = 1e-12);
        assert!(fis.rules[0].coefficients.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn init_two_separated_clusters() {
        let gs = granules(&[(vec![0.0], 0.0), (vec![1.0], 1.0)]);
        for seed in 0..10 {
            let fis = init_rulebase(&gs, 2, seed).unwrap();
            let mut c: Vec<f64> = fis.rules.iter().map(|r| r.centers[0]).collect();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, [0.0, 1.0]);
        }
    }

    #[test]
    fn init_width_floor_on_identical_granules() {
        let gs = granules(&vec![(vec![0.5, 0.5], 1.0); 4]);
        let fis = init_rulebase(&gs, 2, 0).unwrap();
        for r in &fis.rules {
            assert_eq!(r.widths, [INIT_WIDTH_FLOOR, INIT_WIDTH_FLOOR]);
        }
    }

    #[test]
    fn init_rejects_too_few_granules() {
        let gs = granules(&[(vec![0.0], 0.0)]);
        assert!(matches!(init_rulebase(&gs, 2, 0), Err(Error::TooFewGranules { .. })));
    }

    #[test]
    fn constant_decisions_are_absorbed() {
        let pts: Vec<(Vec<f64>, f64)> =
            (0..8).map(|i| (vec![i as f64 / 7.0, (i * i) as f64 / 49.0], 3.25)).collect();
        let gs = granules(&pts);
        let fis = init_rulebase(&gs, 2, 1).unwrap();
        let trained = train_hybrid(&fis, &gs, &NfisTrainParams::default()).unwrap();
        assert!(granule_mse(&trained, &gs) < 1e-20);
        assert_abs_diff_eq!(trained.infer(&[0.3, 0.9]), 3.25, epsilon = 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let pts: Vec<(Vec<f64>, f64)> =
            (0..12).map(|i| (vec![(i as f64 * 0.37) % 1.0], (i as f64).sin())).collect();
        let gs = granules(&pts);
        let p = NfisTrainParams { seed: 3, ..Default::default() };
        let a = train_hybrid(&init_rulebase(&gs, 3, 3).unwrap(), &gs, &p).unwrap();
        let b = train_hybrid(&init_rulebase(&gs, 3, 3).unwrap(), &gs, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rmse_examples() {
        let fis = FuzzyRuleBase { rules: vec![rule(0.0, 1.0, 0.0, 0.0)], n_rules: 1 };
        let exact = Dataset::from_records(vec![Record::new(vec![1.0], 0.0)]).unwrap();
        assert_eq!(rmse(&fis, &exact).unwrap(), 0.0);
        let ds = Dataset::from_records(vec![
            Record::new(vec![0.0], -3.0),
            Record::new(vec![0.0], 4.0),
        ])
        .unwrap();
        assert_abs_diff_eq!(rmse(&fis, &ds).unwrap(), (12.5f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(rmse(&fis, &ds).unwrap(), 3.5355339, epsilon = 1e-7);
        let empty = Dataset::new(vec![], vec!["x1".into()], "y").unwrap();
        assert!(rmse(&fis, &empty).is_err());
    }

    #[test]
    fn rule_base_json() {
        let fis = FuzzyRuleBase { rules: vec![rule(0.5, 0.2, 1.0, -1.0)], n_rules: 1 };
        let text = fis.to_json().unwrap();
        assert!(text.contains("\"centers\"") && text.contains("\"coefficients\""));
        let back: FuzzyRuleBase = serde_json::from_str(&text).unwrap();
        assert_eq!(back, fis);
    }

    fn small_instance() -> impl Strategy<Value = (FuzzyRuleBase, GranuleSet)> {
        (1usize..=3, 1usize..=3).prop_flat_map(|(n_rules, dim)| {
            let rule = (
                prop::collection::vec(0.0f64..1.0, dim),
                prop::collection::vec(0.2f64..0.8, dim),
                prop::collection::vec(-2.0f64..2.0, dim),
                -1.0f64..1.0,
            )
                .prop_map(|(centers, widths, coefficients, intercept)| FuzzyRule {
                    centers,
                    widths,
                    coefficients,
                    intercept,
                });
            let pts = prop::collection::vec((prop::collection::vec(0.0f64..1.0, dim), -1.0f64..1.0), 10);
            (prop::collection::vec(rule, n_rules), pts).prop_map(move |(rules, pts)| {
                (FuzzyRuleBase { rules, n_rules }, granules(&pts))
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn output_is_convex_combination((fis, gs) in small_instance()) {
            for g in &gs.granules {
                let vals: Vec<f64> = fis.rules.iter().map(|r| r.consequent(&g.inputs)).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let y = fis.infer(&g.inputs);
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }

        #[test]
        fn least_squares_never_hurts((fis, gs) in small_instance()) {
            let before = granule_mse(&fis, &gs);
            let mut fitted = fis.clone();
            fit_consequents(&mut fitted, &gs).unwrap();
            prop_assert!(granule_mse(&fitted, &gs) <= before + 1e-12);
        }
    }
}

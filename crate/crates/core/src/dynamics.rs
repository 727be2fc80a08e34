//! The coupled two-layer loop.
//!
//! Each close-open iteration trains a SOM with the commanded neuron count,
//! hands its live prototypes to a second layer, measures that layer's error
//! on the held-out data, and feeds the error into the neuron-growth law for
//! the next iteration.
//!
//! The growth state is carried as a real number. The commanded neuron count
//! is that state rounded half-up and clamped to `[n_min, n_max]`; only the
//! commanded count is factorized into grid dimensions.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nfis::{self, FuzzyRuleBase, NfisTrainParams};
use crate::rst::{self, BinCounts, RuleSet};
use crate::seed;
use crate::som::{self, GranuleSet, SomParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl NoiseParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite()) {
            return Err(Error::param("alpha, beta and gamma must be finite"));
        }
        if self.alpha < 0.0 {
            return Err(Error::param("alpha must be non-negative"));
        }
        if self.beta < 0.0 {
            return Err(Error::param("beta must be non-negative"));
        }
        Ok(())
    }

    /// Unrounded right-hand side of the growth law.
    pub fn growth(&self, n: f64, error: f64) -> f64 {
        self.alpha * n + self.beta * error + self.gamma
    }
}

/// Round half-up and clamp to `[n_min, n_max]`.
pub fn commanded_count(raw: f64, n_min: usize, n_max: usize) -> usize {
    let r = (raw + 0.5).floor();
    if r.is_nan() || r <= n_min as f64 {
        n_min
    } else if r >= n_max as f64 {
        n_max
    } else {
        r as usize
    }
}

/// Real-valued latent neuron count. The grid is commanded with the rounded
/// value while the state itself is carried unrounded, so the iteration
/// converges to the true fixed point instead of sticking on a rounding band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthState {
    pub state: f64,
    pub n_min: usize,
    pub n_max: usize,
}

impl GrowthState {
    pub fn new(initial_n: usize, n_min: usize, n_max: usize) -> Self {
        Self {
            state: initial_n as f64,
            n_min,
            n_max,
        }
    }

    pub fn commanded(&self) -> usize {
        commanded_count(self.state, self.n_min, self.n_max)
    }

    pub fn advance(&mut self, p: &NoiseParams, error: f64) {
        self.state = p
            .growth(self.state, error)
            .clamp(self.n_min as f64, self.n_max as f64);
    }
}

/// Commanded counts of `iterations` steps under a constant error.
pub fn growth_path(cfg: &LoopConfig, p: &NoiseParams, error: f64) -> Vec<usize> {
    let mut g = GrowthState::new(cfg.initial_n, cfg.n_min, cfg.n_max);
    (0..cfg.iterations)
        .map(|_| {
            let n = g.commanded();
            g.advance(p, error);
            n
        })
        .collect()
}

/// One integer step of the growth law.
pub fn update_neuron_count(n: usize, error: f64, p: &NoiseParams, n_min: usize, n_max: usize) -> usize {
    commanded_count(p.growth(n as f64, error), n_min, n_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub iterations: usize,
    /// Rule cap for the fuzzy layer.
    pub n_rules: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub initial_n: usize,
    /// Decision bins for the rough layer; `None` reuses the input bin count.
    pub decision_bins: Option<usize>,
    pub som: SomParams,
    pub nfis: NfisTrainParams,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            n_rules: 2,
            n_min: 4,
            n_max: 400,
            initial_n: 100,
            decision_bins: None,
            som: SomParams::default(),
            nfis: NfisTrainParams::default(),
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if self.n_rules == 0 {
            return Err(Error::param("n_rules must be at least 1"));
        }
        if self.n_min < 2 {
            return Err(Error::param("n_min must be at least 2"));
        }
        if self.n_max < self.n_min {
            return Err(Error::param("n_max must be >= n_min"));
        }
        if !(self.n_min..=self.n_max).contains(&self.initial_n) {
            return Err(Error::param("initial_n must lie within [n_min, n_max]"));
        }
        if matches!(self.decision_bins, Some(d) if d < 2) {
            return Err(Error::param("decision_bins must be at least 2"));
        }
        self.som.validate()?;
        self.nfis.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Sonfis,
    Sorst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub live_granules: usize,
    #[serde(rename = "E")]
    pub error: f64,
    /// Rule cap or bin count in force at this iteration.
    pub extra: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: System,
    pub points: Vec<TrajectoryPoint>,
    pub config: LoopConfig,
    pub params: NoiseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_schedule: Option<Vec<usize>>,
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "N", "n1", "n2", "live_granules", "E", "extra"];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn neuron_counts(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        points_to_csv(&self.points)
    }
}

pub fn points_to_csv(points: &[TrajectoryPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER)?;
    for p in points {
        w.write_record([
            p.t.to_string(),
            p.n.to_string(),
            p.n1.to_string(),
            p.n2.to_string(),
            p.live_granules.to_string(),
            p.error.to_string(),
            p.extra.to_string(),
        ])?;
    }
    crate::error::csv_text(w)
}

pub fn points_from_csv(text: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::param(format!("unexpected trajectory header {header:?}")));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let field = |j: usize| -> Result<&str> {
                rec.get(j).ok_or_else(|| Error::RaggedRow {
                    row: i + 1,
                    expected: 7,
                    found: rec.len(),
                })
            };
            let int = |j: usize| -> Result<usize> {
                let s = field(j)?;
                s.parse().map_err(|_| Error::BadCell {
                    row: i + 1,
                    column: TRAJECTORY_HEADER[j].into(),
                    value: s.into(),
                })
            };
            let e = field(5)?;
            Ok(TrajectoryPoint {
                t: int(0)?,
                n: int(1)?,
                n1: int(2)?,
                n2: int(3)?,
                live_granules: int(4)?,
                error: e.parse().map_err(|_| Error::BadCell {
                    row: i + 1,
                    column: "E".into(),
                    value: e.into(),
                })?,
                extra: int(6)?,
            })
        })
        .collect()
}

/// Everything a second layer sees at one iteration.
pub struct StepContext<'a> {
    pub t: usize,
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub granules: &'a GranuleSet,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Measured { error: f64, extra: usize },
    /// The layer could not be fitted; the loop carries the previous error.
    Skipped { extra: usize },
}

/// The second granulation layer of the loop.
pub trait SecondLayer {
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<StepOutcome>;

    /// Error used when the very first iteration is skipped: the population
    /// standard deviation of the test decisions.
    fn initial_error(&self, test: &Dataset) -> f64 {
        let m = test.len() as f64;
        let mean = test.outputs().sum::<f64>() / m;
        (test.outputs().map(|y| (y - mean).powi(2)).sum::<f64>() / m).sqrt()
    }
}

/// Fuzzy second layer with a fixed rule cap.
#[derive(Debug, Clone)]
pub struct NfisLayer {
    pub n_rules: usize,
    pub params: NfisTrainParams,
    pub last: Option<FuzzyRuleBase>,
}

impl NfisLayer {
    pub fn new(n_rules: usize, params: NfisTrainParams) -> Self {
        Self {
            n_rules,
            params,
            last: None,
        }
    }
}

impl SecondLayer for NfisLayer {
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<StepOutcome> {
        if ctx.granules.len() < self.n_rules {
            return Ok(StepOutcome::Skipped { extra: self.n_rules });
        }
        let init = nfis::init_rulebase(ctx.granules, self.n_rules, ctx.seed)?;
        let params = NfisTrainParams {
            seed: ctx.seed,
            ..self.params
        };
        let fis = nfis::train_hybrid(&init, ctx.granules, &params)?;
        let error = nfis::rmse(&fis, ctx.test)?;
        self.last = Some(fis);
        Ok(StepOutcome::Measured {
            error,
            extra: self.n_rules,
        })
    }
}

/// Rough-set second layer with adaptive scaling. The scaling is learned on
/// the training data each iteration; rules are induced from the granules.
#[derive(Debug, Clone)]
pub struct RstLayer {
    /// Either one bin count per iteration or a single count reused.
    pub schedule: Vec<usize>,
    pub decision_bins: Option<usize>,
    pub last: Option<RuleSet>,
}

impl RstLayer {
    pub fn new(schedule: Vec<usize>, decision_bins: Option<usize>) -> Self {
        Self {
            schedule,
            decision_bins,
            last: None,
        }
    }

    pub fn bins_at(&self, t: usize) -> usize {
        if self.schedule.len() == 1 {
            self.schedule[0]
        } else {
            self.schedule[t - 1]
        }
    }
}

impl SecondLayer for RstLayer {
    fn step(&mut self, ctx: &StepContext<'_>) -> Result<StepOutcome> {
        let bins = self.bins_at(ctx.t);
        let counts = BinCounts {
            inputs: vec![bins; ctx.train.arity()],
            decision: self.decision_bins.unwrap_or(bins),
        };
        let scaling = rst::fit_scaling(ctx.train, &counts)?;
        let table = rst::apply_scaling(&scaling, &ctx.granules.to_dataset())?;
        let rules = rst::induce_rules(&table, &scaling)?;
        let error = rst::mse(&rules, ctx.test)?;
        self.last = Some(rules);
        Ok(StepOutcome::Measured { error, extra: bins })
    }
}

/// Test hook: a second layer that always reports the same error.
#[derive(Debug, Clone, Copy)]
pub struct ConstantError {
    pub error: f64,
    pub extra: usize,
}

impl SecondLayer for ConstantError {
    fn step(&mut self, _ctx: &StepContext<'_>) -> Result<StepOutcome> {
        Ok(StepOutcome::Measured {
            error: self.error,
            extra: self.extra,
        })
    }
}

fn check_data(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.arity() != test.arity() {
        return Err(Error::Arity {
            expected: train.arity(),
            found: test.arity(),
        });
    }
    Ok(())
}

/// Drive any second layer through the close-open iterations.
pub fn run_loop<L: SecondLayer + ?Sized>(
    train: &Dataset,
    test: &Dataset,
    cfg: &LoopConfig,
    p: &NoiseParams,
    system: System,
    layer: &mut L,
) -> Result<Trajectory> {
    cfg.validate()?;
    p.validate()?;
    check_data(train, test)?;

    let mut growth = GrowthState::new(cfg.initial_n, cfg.n_min, cfg.n_max);
    let mut prev_error: Option<f64> = None;
    let mut points = Vec::with_capacity(cfg.iterations);

    for t in 1..=cfg.iterations {
        let n = growth.commanded();
        let dims = som::grid_dims(n);
        let som_params = cfg.som.with_seed(seed::derive(cfg.seed, &[seed::STREAM_SOM, t as u64]));
        let grid = som::train_som(train, dims, &som_params)?;
        let granules = som::extract_granules(&grid, train)?;

        let ctx = StepContext {
            t,
            train,
            test,
            granules: &granules,
            seed: seed::derive(cfg.seed, &[seed::STREAM_LAYER, t as u64]),
        };
        let (error, extra) = match layer.step(&ctx)? {
            StepOutcome::Measured { error, extra } => (error, extra),
            StepOutcome::Skipped { extra } => {
                (prev_error.unwrap_or_else(|| layer.initial_error(test)), extra)
            }
        };
        prev_error = Some(error);
        points.push(TrajectoryPoint {
            t,
            n,
            n1: dims.0,
            n2: dims.1,
            live_granules: granules.len(),
            error,
            extra,
        });
        growth.advance(p, error);
    }

    Ok(Trajectory {
        system,
        points,
        config: cfg.clone(),
        params: *p,
        bin_schedule: None,
    })
}

/// A finished run together with the last fitted second-layer model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome<M> {
    pub trajectory: Trajectory,
    pub model: Option<M>,
}

pub fn run_sonfis(
    train: &Dataset,
    test: &Dataset,
    cfg: &LoopConfig,
    p: &NoiseParams,
) -> Result<RunOutcome<FuzzyRuleBase>> {
    let mut layer = NfisLayer::new(cfg.n_rules, cfg.nfis);
    let trajectory = run_loop(train, test, cfg, p, System::Sonfis, &mut layer)?;
    Ok(RunOutcome {
        trajectory,
        model: layer.last,
    })
}

pub fn validate_schedule(schedule: &[usize], iterations: usize) -> Result<()> {
    if schedule.is_empty() || (schedule.len() != 1 && schedule.len() != iterations) {
        return Err(Error::param(format!(
            "bin schedule must have 1 or {iterations} entries, got {}",
            schedule.len()
        )));
    }
    if schedule.iter().any(|&b| b < 2) {
        return Err(Error::param("every bin count must be at least 2"));
    }
    Ok(())
}

pub fn run_sorst_as(
    train: &Dataset,
    test: &Dataset,
    cfg: &LoopConfig,
    p: &NoiseParams,
    bin_schedule: &[usize],
) -> Result<RunOutcome<RuleSet>> {
    validate_schedule(bin_schedule, cfg.iterations)?;
    let mut layer = RstLayer::new(bin_schedule.to_vec(), cfg.decision_bins);
    let mut trajectory = run_loop(train, test, cfg, p, System::Sorst, &mut layer)?;
    trajectory.bin_schedule = Some(bin_schedule.to_vec());
    Ok(RunOutcome {
        trajectory,
        model: layer.last,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Laminar,
    Transition,
    Disordered,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Laminar => "laminar",
            Regime::Transition => "transition",
            Regime::Disordered => "disordered",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laminar" => Ok(Regime::Laminar),
            "transition" => Ok(Regime::Transition),
            "disordered" => Ok(Regime::Disordered),
            other => Err(Error::param(format!("unknown regime {other:?}"))),
        }
    }
}

/// Coefficient-of-variation cut points for the regime label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeThresholds {
    pub laminar: f64,
    pub disordered: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            laminar: 0.05,
            disordered: 0.25,
        }
    }
}

impl RegimeThresholds {
    pub fn classify(&self, mean: f64, std: f64) -> Regime {
        let cv = if mean > 0.0 { std / mean } else { 0.0 };
        if cv < self.laminar {
            Regime::Laminar
        } else if cv > self.disordered {
            Regime::Disordered
        } else {
            Regime::Transition
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderMetrics {
    pub mean_ng: f64,
    /// Population standard deviation of the neuron count.
    pub std_ng: f64,
    pub min_ng: usize,
    pub max_ng: usize,
    pub mean_e: f64,
    pub regime: Regime,
}

/// Fluctuation statistics of the neuron count after `burn_in` iterations.
/// A count pinned at `n_max` throughout the window is labelled disordered.
pub fn order_metrics(
    traj: &Trajectory,
    burn_in: usize,
    thresholds: &RegimeThresholds,
) -> Result<OrderMetrics> {
    if burn_in >= traj.len() {
        return Err(Error::param(format!(
            "burn_in {burn_in} leaves no points of {}",
            traj.len()
        )));
    }
    let window = &traj.points[burn_in..];
    let m = window.len() as f64;
    let mean_ng = window.iter().map(|p| p.n as f64).sum::<f64>() / m;
    let var = window
        .iter()
        .map(|p| (p.n as f64 - mean_ng).powi(2))
        .sum::<f64>()
        / m;
    let std_ng = var.sqrt();
    let min_ng = window.iter().map(|p| p.n).min().unwrap_or(0);
    let max_ng = window.iter().map(|p| p.n).max().unwrap_or(0);
    let mean_e = window.iter().map(|p| p.error).sum::<f64>() / m;
    let regime = if min_ng >= traj.config.n_max {
        Regime::Disordered
    } else {
        thresholds.classify(mean_ng, std_ng)
    };
    Ok(OrderMetrics {
        mean_ng,
        std_ng,
        min_ng,
        max_ng,
        mean_e,
        regime,
    })
}

/// JSON report for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectory: Trajectory,
    pub burn_in: usize,
    pub metrics: OrderMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_base: Option<FuzzyRuleBase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_set: Option<RuleSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_text: Option<String>,
}

impl RunReport {
    pub fn sonfis(
        run: RunOutcome<FuzzyRuleBase>,
        burn_in: usize,
        thresholds: &RegimeThresholds,
    ) -> Result<Self> {
        let metrics = order_metrics(&run.trajectory, burn_in, thresholds)?;
        Ok(Self {
            trajectory: run.trajectory,
            burn_in,
            metrics,
            rule_base: run.model,
            rule_set: None,
            rules_text: None,
        })
    }

    pub fn sorst(run: RunOutcome<RuleSet>, burn_in: usize, thresholds: &RegimeThresholds) -> Result<Self> {
        let metrics = order_metrics(&run.trajectory, burn_in, thresholds)?;
        Ok(Self {
            rules_text: run.model.as_ref().map(RuleSet::to_text),
            trajectory: run.trajectory,
            burn_in,
            metrics,
            rule_base: None,
            rule_set: run.model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, min_max_normalize, split, SplitSpec};

    fn data(n_train: usize, n_test: usize) -> (Dataset, Dataset) {
        let ds = min_max_normalize(&gen_synthetic(n_train + n_test, 0.05, 7).unwrap()).unwrap();
        split(&ds, &SplitSpec { n_train, n_test, shuffle_seed: Some(1) }).unwrap()
    }

    fn traj(ns: &[usize]) -> Trajectory {
        Trajectory {
            system: System::Sonfis,
            points: ns
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let (n1, n2) = som::grid_dims(n);
                    TrajectoryPoint { t: i + 1, n, n1, n2, live_granules: n, error: 0.1, extra: 2 }
                })
                .collect(),
            config: LoopConfig::default(),
            params: NoiseParams::new(0.9, 0.001, 0.5),
            bin_schedule: None,
        }
    }

    #[test]
    fn growth_examples() {
        let id = NoiseParams::new(1.0, 0.0, 0.0);
        assert_eq!(update_neuron_count(50, 0.0, &id, 4, 400), 50);
        let baseline = NoiseParams::new(0.9, 0.001, 0.5);
        assert_eq!(update_neuron_count(100, 10.0, &baseline, 4, 400), 91);
        let shrink = NoiseParams::new(0.5, 0.0, 0.0);
        assert_eq!(update_neuron_count(4, 0.0, &shrink, 4, 400), 4);
        assert_eq!(update_neuron_count(400, 0.0, &NoiseParams::new(2.0, 0.0, 0.0), 4, 400), 400);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(commanded_count(6.5, 4, 400), 7);
        assert_eq!(commanded_count(6.4999, 4, 400), 6);
        assert_eq!(commanded_count(-3.0, 4, 400), 4);
    }

    #[test]
    fn noise_params_validation() {
        assert!(NoiseParams::new(-0.1, 0.0, 0.0).validate().is_err());
        assert!(NoiseParams::new(0.1, -1.0, 0.0).validate().is_err());
        assert!(NoiseParams::new(0.1, 0.0, f64::NAN).validate().is_err());
        assert!(NoiseParams::new(0.9, 0.001, -2.0).validate().is_ok());
    }

    #[test]
    fn config_validation() {
        let bad = [
            LoopConfig { n_min: 1, ..Default::default() },
            LoopConfig { n_max: 3, ..Default::default() },
            LoopConfig { initial_n: 500, ..Default::default() },
            LoopConfig { iterations: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(LoopConfig::default().validate().is_ok());
    }

    #[test]
    fn sonfis_runs_and_is_deterministic() {
        let (train, test) = data(120, 30);
        let cfg = LoopConfig { iterations: 6, initial_n: 16, seed: 3, ..Default::default() };
        let p = NoiseParams::new(0.9, 0.001, 0.5);
        let a = run_sonfis(&train, &test, &cfg, &p).unwrap();
        let b = run_sonfis(&train, &test, &cfg, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectory.len(), 6);
        assert!(a.model.is_some());
        for (i, pt) in a.trajectory.points.iter().enumerate() {
            assert_eq!(pt.t, i + 1);
            assert_eq!(pt.n, pt.n1 * pt.n2);
            assert!((cfg.n_min..=cfg.n_max).contains(&pt.n));
            assert!(pt.error >= 0.0);
            assert_eq!(pt.extra, 2);
        }
    }

    #[test]
    fn skipped_first_step_uses_test_spread() {
        struct Never;
        impl SecondLayer for Never {
            fn step(&mut self, _: &StepContext<'_>) -> Result<StepOutcome> {
                Ok(StepOutcome::Skipped { extra: 9 })
            }
        }
        let (train, test) = data(40, 10);
        let cfg = LoopConfig { iterations: 3, initial_n: 4, ..Default::default() };
        let tr = run_loop(&train, &test, &cfg, &NoiseParams::new(0.9, 0.0, 0.5), System::Sonfis, &mut Never)
            .unwrap();
        let m = test.len() as f64;
        let mean = test.outputs().sum::<f64>() / m;
        let sd = (test.outputs().map(|y| (y - mean).powi(2)).sum::<f64>() / m).sqrt();
        assert!(tr.points.iter().all(|p| p.error == sd && p.extra == 9));
    }

    #[test]
    fn nfis_guard_skips_when_granules_are_scarce() {
        // Two distinct points can feed at most two live granules.
        let mut recs = vec![crate::dataset::Record::new(vec![0.0], 0.0); 5];
        recs.extend(vec![crate::dataset::Record::new(vec![1.0], 1.0); 5]);
        let ds = Dataset::from_records(recs).unwrap();
        let cfg = LoopConfig { iterations: 2, initial_n: 4, n_rules: 3, ..Default::default() };
        let run = run_sonfis(&ds, &ds, &cfg, &NoiseParams::new(0.9, 0.0, 0.5)).unwrap();
        assert!(run.model.is_none());
        assert!(run.trajectory.points.iter().all(|p| p.error == 0.5));
    }

    #[test]
    fn sorst_schedule_is_recorded() {
        let (train, test) = data(150, 30);
        let cfg = LoopConfig { iterations: 7, initial_n: 16, ..Default::default() };
        let sched = [2, 3, 4, 5, 6, 7, 8];
        let run = run_sorst_as(&train, &test, &cfg, &NoiseParams::new(0.9, 0.7, 1.0), &sched).unwrap();
        let extras: Vec<usize> = run.trajectory.points.iter().map(|p| p.extra).collect();
        assert_eq!(extras, sched);
        assert_eq!(run.trajectory.bin_schedule.as_deref(), Some(&sched[..]));
        assert!(run.model.is_some());
        assert!(run_sorst_as(&train, &test, &cfg, &NoiseParams::new(0.9, 0.7, 1.0), &[2, 3]).is_err());
        assert!(run_sorst_as(&train, &test, &cfg, &NoiseParams::new(0.9, 0.7, 1.0), &[1]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let flat = order_metrics(&traj(&[5; 10]), 0, &RegimeThresholds::default()).unwrap();
        assert_eq!(flat.std_ng, 0.0);
        assert_eq!(flat.regime, Regime::Laminar);

        let alt = order_metrics(&traj(&[4, 6, 4, 6, 4, 6]), 0, &RegimeThresholds::default()).unwrap();
        assert_eq!(alt.mean_ng, 5.0);
        assert_eq!(alt.std_ng, 1.0);
        assert_eq!((alt.min_ng, alt.max_ng), (4, 6));
        assert_eq!(alt.regime, Regime::Transition);

        let wild = order_metrics(&traj(&[4, 40, 4, 40]), 0, &RegimeThresholds::default()).unwrap();
        assert_eq!(wild.regime, Regime::Disordered);

        let pinned = order_metrics(&traj(&[100, 400, 400, 400]), 1, &RegimeThresholds::default()).unwrap();
        assert_eq!(pinned.regime, Regime::Disordered);

        assert!(order_metrics(&traj(&[4, 4]), 2, &RegimeThresholds::default()).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut t = traj(&[100, 91, 82, 74]);
        t.points[1].error = 0.1 + 0.2;
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("t,N,n1,n2,live_granules,E,extra\n"));
        assert_eq!(points_from_csv(&text).unwrap(), t.points);
    }
}

//! JSON run configuration. Every field is optional; omitted fields take the
//! baseline experiment's values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sonfis::dataset::{self, Dataset, SplitSpec};
use sonfis::dynamics::{validate_schedule, LoopConfig, NoiseParams, RegimeThresholds, System};
use sonfis::nfis::NfisTrainParams;
use sonfis::som::SomParams;
use sonfis::sweep::SweepSpec;

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv { path: PathBuf, decision_column: String },
    Synthetic { n: usize, noise_sd: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub system: System,
    /// Empty lists fall back to the single top-level value.
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Rule caps for sonfis, bin counts for sorst.
    pub extras: Vec<usize>,
    pub repeats: usize,
    pub trajectories: bool,
    pub parallel: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            system: System::Sonfis,
            alphas: Vec::new(),
            betas: Vec::new(),
            gammas: Vec::new(),
            extras: Vec::new(),
            repeats: 5,
            trajectories: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSource,
    /// Min-max normalize inputs and decision before splitting.
    pub normalize: bool,
    pub split: SplitSpec,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_rules: usize,
    pub iterations: usize,
    pub n_min: usize,
    pub n_max: usize,
    #[serde(alias = "initial_N")]
    pub initial_n: usize,
    /// Bin schedule for run-sorst: one count, or one per iteration.
    pub bins: Vec<usize>,
    pub decision_bins: Option<usize>,
    pub burn_in: usize,
    pub thresholds: RegimeThresholds,
    pub som: SomParams,
    pub nfis: NfisTrainParams,
    pub seed: u64,
    pub sweep: SweepSection,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                n: 693,
                noise_sd: 0.05,
                seed: 7,
            },
            normalize: true,
            split: SplitSpec {
                n_train: 600,
                n_test: 93,
                shuffle_seed: None,
            },
            alpha: 0.9,
            beta: 0.001,
            gamma: 0.5,
            n_rules: 2,
            iterations: 30,
            n_min: 4,
            n_max: 400,
            initial_n: 100,
            bins: vec![3],
            decision_bins: None,
            burn_in: 10,
            thresholds: RegimeThresholds::default(),
            som: SomParams::default(),
            nfis: NfisTrainParams::default(),
            seed: 0,
            sweep: SweepSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("{name}: {msg}"))
}

fn check(ok: bool, name: &str, msg: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(field(name, msg))
    }
}

impl RunConfig {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            iterations: self.iterations,
            n_rules: self.n_rules,
            n_min: self.n_min,
            n_max: self.n_max,
            initial_n: self.initial_n,
            decision_bins: self.decision_bins,
            som: self.som,
            nfis: self.nfis,
            seed: self.seed,
        }
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams::new(self.alpha, self.beta, self.gamma)
    }

    /// Field-by-field checks so every diagnostic names its key.
    pub fn validate(&self) -> Result<(), Failure> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            check(v.is_finite() && v >= 0.0, name, "must be finite and non-negative")?;
        }
        check(self.gamma.is_finite(), "gamma", "must be finite")?;
        check(self.iterations >= 1, "iterations", "must be at least 1")?;
        check(self.n_rules >= 1, "n_rules", "must be at least 1")?;
        check(self.n_min >= 2, "n_min", "must be at least 2")?;
        check(self.n_max >= self.n_min, "n_max", "must be >= n_min")?;
        check(
            (self.n_min..=self.n_max).contains(&self.initial_n),
            "initial_n",
            "must lie within [n_min, n_max]",
        )?;
        check(
            self.burn_in < self.iterations,
            "burn_in",
            "must be smaller than iterations",
        )?;
        check(
            self.thresholds.laminar >= 0.0 && self.thresholds.disordered >= self.thresholds.laminar,
            "thresholds",
            "need 0 <= laminar <= disordered",
        )?;
        if let Some(d) = self.decision_bins {
            check(d >= 2, "decision_bins", "must be at least 2")?;
        }
        validate_schedule(&self.bins, self.iterations).map_err(|e| field("bins", e))?;
        if let DataSource::Synthetic { n, noise_sd, .. } = self.data {
            check(n >= 1, "data.synthetic.n", "must be at least 1")?;
            check(
                noise_sd.is_finite() && noise_sd >= 0.0,
                "data.synthetic.noise_sd",
                "must be finite and non-negative",
            )?;
        }
        check(
            self.split.n_train >= 1 && self.split.n_test >= 1,
            "split",
            "n_train and n_test must both be at least 1",
        )?;
        self.som.validate().map_err(|e| field("som", e))?;
        self.nfis.validate().map_err(|e| field("nfis", e))?;
        check(self.sweep.repeats >= 1, "sweep.repeats", "must be at least 1")?;
        for (name, vs) in [("sweep.alphas", &self.sweep.alphas), ("sweep.betas", &self.sweep.betas)] {
            check(
                vs.iter().all(|v| v.is_finite() && *v >= 0.0),
                name,
                "values must be finite and non-negative",
            )?;
        }
        check(
            self.sweep.gammas.iter().all(|v| v.is_finite()),
            "sweep.gammas",
            "values must be finite",
        )?;
        let min_extra = if self.sweep.system == System::Sorst { 2 } else { 1 };
        check(
            self.sweep.extras.iter().all(|&e| e >= min_extra),
            "sweep.extras",
            "rule caps must be >= 1 and bin counts >= 2",
        )?;
        Ok(())
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let s = &self.sweep;
        let default_extra = match s.system {
            System::Sonfis => self.n_rules,
            System::Sorst => self.bins[0],
        };
        SweepSpec {
            system: s.system,
            alphas: or(&s.alphas, self.alpha),
            betas: or(&s.betas, self.beta),
            gammas: or(&s.gammas, self.gamma),
            extras: if s.extras.is_empty() {
                vec![default_extra]
            } else {
                s.extras.clone()
            },
            repeats: s.repeats,
            base: self.loop_config(),
            burn_in: self.burn_in,
            thresholds: self.thresholds,
            keep_trajectories: s.trajectories,
            parallel: s.parallel,
        }
    }

    /// Load, optionally normalize, and split the configured data.
    pub fn datasets(&self) -> Result<(Dataset, Dataset), Failure> {
        let raw = match &self.data {
            DataSource::Csv {
                path,
                decision_column,
            } => dataset::load_csv(path, decision_column)?,
            DataSource::Synthetic { n, noise_sd, seed } => {
                dataset::gen_synthetic(*n, *noise_sd, *seed)?
            }
        };
        let ds = if self.normalize {
            dataset::min_max_normalize(&raw)?
        } else {
            raw
        };
        self.split
            .validate(ds.len())
            .map_err(|e| field("split", e))?;
        Ok(dataset::split(&ds, &self.split)?)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, Failure> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Failure::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

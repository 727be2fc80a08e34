//! Browser bindings. Every export returns a JSON string for the page to
//! plot; failures surface as JavaScript errors.

use serde_json::json;
use sonfis::dataset::{gen_synthetic, min_max_normalize, split, Dataset, SplitSpec};
use sonfis::dynamics::{
    growth_path, order_metrics, run_sonfis, LoopConfig, NoiseParams, RegimeThresholds, System,
};
use sonfis::sweep::{profile_from_rows, run_sweep, Axis, SweepSpec};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn surrogate(n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset), JsError> {
    let ds = min_max_normalize(&gen_synthetic(n_train + n_test, 0.05, seed).map_err(js)?).map_err(js)?;
    split(
        &ds,
        &SplitSpec {
            n_train,
            n_test,
            shuffle_seed: None,
        },
    )
    .map_err(js)
}

fn loop_config(iterations: usize, initial_n: usize, seed: u64) -> Result<LoopConfig, JsError> {
    let cfg = LoopConfig {
        iterations,
        initial_n,
        seed,
        ..LoopConfig::default()
    };
    cfg.validate().map_err(js)?;
    Ok(cfg)
}

/// Neuron counts under a constant error, with the closed-form fixed point.
#[wasm_bindgen]
pub fn growth_trajectory(
    alpha: f64,
    beta: f64,
    gamma: f64,
    error: f64,
    initial_n: usize,
    iterations: usize,
) -> Result<String, JsError> {
    let p = NoiseParams::new(alpha, beta, gamma);
    p.validate().map_err(js)?;
    let cfg = loop_config(iterations, initial_n, 0)?;
    let fixed_point = (alpha < 1.0).then(|| (beta * error + gamma) / (1.0 - alpha));
    Ok(json!({
        "n": growth_path(&cfg, &p, error),
        "fixed_point": fixed_point,
        "n_min": cfg.n_min,
        "n_max": cfg.n_max,
    })
    .to_string())
}

/// One SOM + neuro-fuzzy run on the synthetic surrogate.
#[wasm_bindgen]
pub fn sonfis_trajectory(
    alpha: f64,
    beta: f64,
    gamma: f64,
    n_rules: usize,
    iterations: usize,
    seed: u64,
) -> Result<String, JsError> {
    let (train, test) = surrogate(600, 93, 7)?;
    let cfg = LoopConfig {
        n_rules,
        ..loop_config(iterations, 100, seed)?
    };
    let p = NoiseParams::new(alpha, beta, gamma);
    let run = run_sonfis(&train, &test, &cfg, &p).map_err(js)?;
    let burn_in = iterations / 3;
    let metrics = order_metrics(&run.trajectory, burn_in, &RegimeThresholds::default()).map_err(js)?;
    Ok(json!({
        "points": run.trajectory.points,
        "burn_in": burn_in,
        "metrics": metrics,
    })
    .to_string())
}

/// Mean and fluctuation of the neuron count across an alpha grid.
#[wasm_bindgen]
pub fn alpha_profile(
    alphas: Vec<f64>,
    beta: f64,
    gamma: f64,
    repeats: usize,
    iterations: usize,
    seed: u64,
) -> Result<String, JsError> {
    let (train, test) = surrogate(300, 93, 7)?;
    let spec = SweepSpec {
        alphas,
        repeats,
        burn_in: iterations / 3,
        ..SweepSpec::single(
            System::Sonfis,
            loop_config(iterations, 100, seed)?,
            NoiseParams::new(0.9, beta, gamma),
            2,
        )
    };
    let result = run_sweep(&spec, &train, &test).map_err(js)?;
    let profile = profile_from_rows(&result.rows(), Axis::Alpha);
    serde_json::to_string(&profile).map_err(js)
}

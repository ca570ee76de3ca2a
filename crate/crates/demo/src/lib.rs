//! WebAssembly bindings for the interactive demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string that the page
//! plots on a canvas. The `*_json` functions hold the logic so it can be
//! tested natively.

use serde::Serialize;
use shift_oracle::shift::{example1_errors, GaussianMixtureSpec};
use shift_oracle::toy::{
    consistency_bound, run_biased_support_experiment, run_consistency_experiment,
    ConsistencyRow, LinearSigmoidClassifier, ToyConfig,
};
use shift_oracle::Result;
use wasm_bindgen::prelude::*;

/// The page caps sample sizes so a slider drag stays interactive.
pub const MAX_DEMO_SAMPLES: usize = 2_000_000;

#[derive(Serialize)]
struct ConsistencyView {
    rows: Vec<ConsistencyRow>,
    source_accuracy: f64,
    threshold: f64,
    bound: f64,
}

#[derive(Serialize)]
struct BiasView {
    c_target: f64,
    true_acc: f64,
    atc_acc: f64,
}

fn toy_config(gamma: f64, c: f64, p_spr: f64, n: usize, seed: u64) -> Result<ToyConfig> {
    if n > MAX_DEMO_SAMPLES {
        return Err(shift_oracle::Error::InvalidInput(format!(
            "demo sample size is capped at {MAX_DEMO_SAMPLES}"
        )));
    }
    let cfg = ToyConfig {
        gamma,
        c,
        p_spr,
        p_spr_target: p_spr,
        n,
        seed,
        c_target: None,
        target_label_p1: 0.5,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Accuracy curves over target agreement rates `0, 0.05, ..., 1`.
pub fn toy_consistency_json(
    gamma: f64,
    c: f64,
    p_spr: f64,
    w_inv: f64,
    w_spr: f64,
    n: usize,
    seed: u64,
) -> Result<String> {
    let cfg = toy_config(gamma, c, p_spr, n, seed)?;
    let clf = LinearSigmoidClassifier::new(w_inv, w_spr);
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let table = run_consistency_experiment(&clf, &cfg, &grid)?;
    let view = ConsistencyView {
        rows: table.rows,
        source_accuracy: table.source_accuracy,
        threshold: table.atc_mc.threshold.clamp(0.0, 1.0),
        bound: consistency_bound(n, p_spr, w_spr, 0.01),
    };
    Ok(serde_json::to_string(&view).expect("plain numbers serialize"))
}

/// ATC against truth as the target support shrinks from `c` toward `gamma`.
#[allow(clippy::too_many_arguments)]
pub fn biased_support_json(
    gamma: f64,
    c: f64,
    p_spr: f64,
    p_target: f64,
    w_inv: f64,
    w_spr: f64,
    n: usize,
    seed: u64,
) -> Result<String> {
    let base = toy_config(gamma, c, p_spr, n, seed)?;
    let ratio = w_spr / w_inv;
    let mut out = Vec::new();
    for i in 0..=16 {
        let c1 = c - (c - gamma) * i as f64 / 20.0;
        // the error strip must stay inside the shrunken support
        if w_spr > 0.0 && c1 <= ratio {
            break;
        }
        let cfg = ToyConfig {
            p_spr_target: p_target,
            c_target: Some(c1),
            ..base
        };
        let r = run_biased_support_experiment(&LinearSigmoidClassifier::new(w_inv, w_spr), &cfg)?;
        out.push(BiasView {
            c_target: c1,
            true_acc: r.true_acc,
            atc_acc: r.atc_acc,
        });
    }
    Ok(serde_json::to_string(&out).expect("plain numbers serialize"))
}

pub fn impossibility_json(
    alpha: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    tau: f64,
    samples: usize,
    seed: u64,
) -> Result<String> {
    if samples > MAX_DEMO_SAMPLES {
        return Err(shift_oracle::Error::InvalidInput(format!(
            "demo sample size is capped at {MAX_DEMO_SAMPLES}"
        )));
    }
    let spec = GaussianMixtureSpec {
        mu1,
        mu2,
        alpha,
        beta,
    };
    let r = example1_errors(&spec, tau, samples, seed)?;
    Ok(serde_json::to_string(&r).expect("plain numbers serialize"))
}

fn js_err(e: shift_oracle::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn toy_consistency(
    gamma: f64,
    c: f64,
    p_spr: f64,
    w_inv: f64,
    w_spr: f64,
    n: u32,
    seed: u32,
) -> Result<String, JsError> {
    toy_consistency_json(gamma, c, p_spr, w_inv, w_spr, n as usize, seed.into()).map_err(js_err)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn biased_support(
    gamma: f64,
    c: f64,
    p_spr: f64,
    p_target: f64,
    w_inv: f64,
    w_spr: f64,
    n: u32,
    seed: u32,
) -> Result<String, JsError> {
    biased_support_json(gamma, c, p_spr, p_target, w_inv, w_spr, n as usize, seed.into())
        .map_err(js_err)
}

#[wasm_bindgen]
pub fn impossibility(
    alpha: f64,
    beta: f64,
    mu1: f64,
    mu2: f64,
    tau: f64,
    samples: u32,
    seed: u32,
) -> Result<String, JsError> {
    impossibility_json(alpha, beta, mu1, mu2, tau, samples as usize, seed.into()).map_err(js_err)
}

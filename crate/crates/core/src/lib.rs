//! Label-free accuracy estimation for a fixed classifier under distribution shift.
//!
//! The crate works purely on precomputed classifier outputs (softmax rows or
//! logits). Given a labeled source validation split and one or more unlabeled
//! target splits it predicts target accuracy with:
//!
//! - ATC, the average thresholded confidence estimator, with either the
//!   maximum-confidence or the negative-entropy score;
//! - the AC, DOC, IM and GDE baselines;
//! - importance-reweighted error under covariate or label shift, with
//!   label-shift weights estimated by maximum likelihood.
//!
//! It also ships the simulations used to sanity check those estimators: a
//! two-feature spurious-correlation toy problem with a closed-form accuracy,
//! and a Gaussian-mixture witness that covariate-shift and label-shift
//! reweighting disagree on the same data.

#![forbid(unsafe_code)]

pub mod calibration;
pub mod data;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod io;
pub mod rng;
pub mod shift;
pub mod toy;

#[cfg(feature = "cli")]
pub mod cli;

pub use calibration::{apply_temperature, fit_temperature, TemperatureModel};
pub use data::{error_rate, score, softmax_rows, Matrix, PredictionSet, ScoreKind, ScoreVector};
pub use error::{Error, Result};
pub use estimators::{
    ac_estimate, atc_estimate, doc_estimate, fit_atc, gde_estimate, im_estimate, AtcModel,
    BinTable, Estimate, Method,
};
pub use evaluation::{apply_fit, mae, siegel_fit, EstimateReport, LinearFit};

/// A value forced into `[0, 1]`, remembering what it was before clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub raw: f64,
}

impl Clamped {
    pub fn unit(raw: f64) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
        }
    }

    pub fn was_clamped(&self) -> bool {
        self.value != self.raw
    }
}

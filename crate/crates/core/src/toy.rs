//! Two-feature binary task with a spurious feature.
//!
//! `x_inv` is fully predictive with margin `gamma`: given the label it is
//! uniform on `[gamma, c]` (label 1) or `[-c, -gamma]` (label 0). `x_spr` is
//! `+-1` and agrees with the label sign `2y - 1` with probability `p_spr` on
//! source and `p_spr_target` on target. Only the agreement rate shifts, so the
//! distribution inside the agreement group (`X_C`) and the mismatch group
//! (`X_M`) stays fixed, optionally up to a narrower target support `c_target`.
//!
//! Classifiers are `f(x) = [1 - sigma(z), sigma(z)]` with
//! `z = w_inv * x_inv + w_spr * x_spr`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::data::{score, Matrix, PredictionSet, ScoreKind};
use crate::error::{Error, Result};
use crate::estimators::{
    ac_estimate, atc_estimate, doc_estimate, fit_atc, gde_estimate, im_estimate, AtcModel,
    DEFAULT_BINS,
};
use crate::rng::{self, ids};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub gamma: f64,
    pub c: f64,
    pub p_spr: f64,
    pub p_spr_target: f64,
    pub n: usize,
    pub seed: u64,
    /// Narrower target support bound `c1` in `(gamma, c]`.
    pub c_target: Option<f64>,
    /// Target probability of label 1. Source labels are always balanced.
    pub target_label_p1: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            c: 1.0,
            p_spr: 0.9,
            p_spr_target: 0.9,
            n: 100_000,
            seed: 0,
            c_target: None,
            target_label_p1: 0.5,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < self.c && self.c.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < gamma < c, got gamma={} c={}",
                self.gamma, self.c
            )));
        }
        if !(self.p_spr > 0.5 && self.p_spr < 1.0) {
            return Err(Error::invalid(format!("p_spr must lie in (0.5, 1), got {}", self.p_spr)));
        }
        if !(0.0..=1.0).contains(&self.p_spr_target) {
            return Err(Error::invalid(format!(
                "p_spr_target must lie in [0, 1], got {}",
                self.p_spr_target
            )));
        }
        if !(0.0..=1.0).contains(&self.target_label_p1) {
            return Err(Error::invalid("target label probability must lie in [0, 1]"));
        }
        if let Some(c1) = self.c_target {
            if !(c1 > self.gamma && c1 <= self.c) {
                return Err(Error::invalid(format!(
                    "c_target must lie in (gamma, c], got {c1}"
                )));
            }
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        Ok(())
    }

    fn agreement(&self, role: Role) -> f64 {
        match role {
            Role::Source => self.p_spr,
            Role::Target => self.p_spr_target,
        }
    }

    fn support(&self, role: Role) -> f64 {
        match role {
            Role::Source => self.c,
            Role::Target => self.c_target.unwrap_or(self.c),
        }
    }

    fn label_p1(&self, role: Role) -> f64 {
        match role {
            Role::Source => 0.5,
            Role::Target => self.target_label_p1,
        }
    }

    /// Target copy with a different agreement rate.
    pub fn with_target_agreement(&self, p: f64) -> Self {
        Self {
            p_spr_target: p,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSigmoidClassifier {
    pub w_inv: f64,
    pub w_spr: f64,
}

impl LinearSigmoidClassifier {
    pub fn new(w_inv: f64, w_spr: f64) -> Self {
        Self { w_inv, w_spr }
    }

    pub fn logit(&self, x_inv: f64, x_spr: f64) -> f64 {
        self.w_inv * x_inv + self.w_spr * x_spr
    }

    fn require_scope(&self) -> Result<()> {
        if !(self.w_inv > 0.0) {
            return Err(Error::OutOfTheoremScope(format!(
                "w_inv must be positive, got {}",
                self.w_inv
            )));
        }
        if !self.w_spr.is_finite() || !self.w_inv.is_finite() {
            return Err(Error::OutOfTheoremScope("weights must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToySample {
    pub x_inv: Vec<f64>,
    pub x_spr: Vec<f64>,
    pub y: Vec<usize>,
}

impl ToySample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Whether example `i` sits in the mismatch group `x_spr * (2y - 1) < 0`.
    pub fn is_minority(&self, i: usize) -> bool {
        self.x_spr[i] * label_sign(self.y[i]) < 0.0
    }
}

fn label_sign(y: usize) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Draws `config.n` points from the source or target distribution.
///
/// The source uses stream [`ids::SOURCE`] and the target
/// [`ids::TARGET_BASE`] of `config.seed`.
pub fn sample_toy(config: &ToyConfig, role: Role) -> Result<ToySample> {
    let id = match role {
        Role::Source => ids::SOURCE,
        Role::Target => ids::TARGET_BASE,
    };
    sample_toy_with(config, role, config.n, &mut rng::stream(config.seed, id))
}

/// Like [`sample_toy`] with an explicit size and generator.
pub fn sample_toy_with(
    config: &ToyConfig,
    role: Role,
    n: usize,
    rng: &mut ChaCha12Rng,
) -> Result<ToySample> {
    config.validate()?;
    let p_agree = config.agreement(role);
    let p1 = config.label_p1(role);
    let (lo, hi) = (config.gamma, config.support(role));
    let mut s = ToySample {
        x_inv: Vec::with_capacity(n),
        x_spr: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let y = usize::from(rng.random::<f64>() < p1);
        let sign = label_sign(y);
        let magnitude = lo + (hi - lo) * rng.random::<f64>();
        let agree = rng.random::<f64>() < p_agree;
        s.y.push(y);
        s.x_inv.push(sign * magnitude);
        s.x_spr.push(if agree { sign } else { -sign });
    }
    Ok(s)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Class probabilities `[sigma(-z), sigma(z)]` with the sample's labels attached.
pub fn toy_predict(clf: &LinearSigmoidClassifier, sample: &ToySample) -> PredictionSet {
    let mut data = Vec::with_capacity(2 * sample.len());
    for (&xi, &xs) in sample.x_inv.iter().zip(&sample.x_spr) {
        let z = clf.logit(xi, xs);
        data.push(sigmoid(-z));
        data.push(sigmoid(z));
    }
    let probs = Matrix::new(sample.len(), 2, data).expect("two columns per row");
    PredictionSet::new(probs, Some(sample.y.clone()), "toy")
        .expect("sigmoid rows are valid probabilities")
}

/// Closed-form accuracy of `clf` on the source or target distribution.
///
/// With `w_spr > 0` errors only happen in the mismatch group, on the points
/// with `|x_inv| <= w_spr / w_inv`; with `w_spr < 0` they move to the
/// agreement group. `q` is the uniform mass of that error strip.
pub fn toy_true_accuracy(
    clf: &LinearSigmoidClassifier,
    config: &ToyConfig,
    role: Role,
) -> Result<f64> {
    clf.require_scope()?;
    config.validate()?;
    if clf.w_spr == 0.0 {
        return Ok(1.0);
    }
    let p = config.agreement(role);
    let b = config.support(role);
    let q = ((clf.w_spr.abs() / clf.w_inv - config.gamma) / (b - config.gamma)).clamp(0.0, 1.0);
    Ok(if clf.w_spr > 0.0 {
        p + (1.0 - p) * (1.0 - q)
    } else {
        (1.0 - p) + p * (1.0 - q)
    })
}

/// Theorem bound `sqrt(ln(8/delta) / (n * c_spr))` on the ATC target error gap,
/// with `c_spr = 1 - p_spr` for `w_spr > 0` and `p_spr` otherwise.
pub fn consistency_bound(n: usize, p_spr: f64, w_spr: f64, delta: f64) -> f64 {
    let c_spr = if w_spr > 0.0 { 1.0 - p_spr } else { p_spr };
    ((8.0 / delta).ln() / (n as f64 * c_spr)).sqrt()
}

/// Bound `2 sqrt(ln(4/delta) / (2n))` on the ATC error gap for fresh source data.
pub fn source_consistency_bound(n: usize, delta: f64) -> f64 {
    2.0 * ((4.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// One row of the consistency experiment. Every column is an accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub p_target: f64,
    pub true_acc: f64,
    pub atc_mc: f64,
    pub atc_ne: f64,
    pub ac: f64,
    pub doc: f64,
    pub im: f64,
    pub gde: f64,
}

impl ConsistencyRow {
    pub const HEADER: [&'static str; 8] =
        ["p_target", "true_acc", "atc_mc", "atc_ne", "ac", "doc", "im", "gde"];

    pub fn values(&self) -> [f64; 8] {
        [
            self.p_target,
            self.true_acc,
            self.atc_mc,
            self.atc_ne,
            self.ac,
            self.doc,
            self.im,
            self.gde,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
    pub atc_mc: AtcModel,
    pub atc_ne: AtcModel,
    /// Second model used for the disagreement baseline.
    pub gde_partner: LinearSigmoidClassifier,
    pub source_accuracy: f64,
}

/// Fits everything on one source draw, then estimates each target agreement rate.
///
/// Streams: source from [`ids::SOURCE`], the disagreement partner's weight
/// noise from [`ids::MODEL_NOISE`], grid point `i` from `TARGET_BASE + i`.
pub fn run_consistency_experiment(
    clf: &LinearSigmoidClassifier,
    config: &ToyConfig,
    p_grid: &[f64],
) -> Result<ConsistencyTable> {
    clf.require_scope()?;
    config.validate()?;
    let source = sample_toy_with(config, Role::Source, config.n, &mut rng::stream(config.seed, ids::SOURCE))?;
    let source_preds = toy_predict(clf, &source);
    let correct = source_preds.correctness()?;
    let atc_mc = fit_atc(&score(&source_preds, ScoreKind::MaxConfidence), &correct)?;
    let atc_ne = fit_atc(&score(&source_preds, ScoreKind::NegativeEntropy), &correct)?;
    let source_accuracy = correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64;

    let mut noise = rng::stream(config.seed, ids::MODEL_NOISE);
    let gde_partner = LinearSigmoidClassifier::new(
        clf.w_inv + noise.random_range(-0.05..=0.05),
        clf.w_spr + noise.random_range(-0.05..=0.05),
    );

    let mut rows = Vec::with_capacity(p_grid.len());
    for (i, &p) in p_grid.iter().enumerate() {
        let tcfg = config.with_target_agreement(p);
        tcfg.validate()?;
        let mut rng = rng::stream(config.seed, ids::TARGET_BASE + i as u64);
        let target = sample_toy_with(&tcfg, Role::Target, config.n, &mut rng)?;
        let tp = toy_predict(clf, &target);
        let tp_b = toy_predict(&gde_partner, &target);
        rows.push(ConsistencyRow {
            p_target: p,
            true_acc: toy_true_accuracy(clf, &tcfg, Role::Target)?,
            atc_mc: atc_estimate(&atc_mc, &score(&tp, ScoreKind::MaxConfidence))?.predicted_accuracy,
            atc_ne: atc_estimate(&atc_ne, &score(&tp, ScoreKind::NegativeEntropy))?.predicted_accuracy,
            ac: ac_estimate(&tp).predicted_accuracy,
            doc: doc_estimate(&source_preds, &tp)?.predicted_accuracy,
            im: im_estimate(&source_preds, &tp, DEFAULT_BINS)?.predicted_accuracy,
            gde: gde_estimate(&tp, &tp_b)?.predicted_accuracy,
        });
    }
    Ok(ConsistencyTable {
        rows,
        atc_mc,
        atc_ne,
        gde_partner,
        source_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedSupportResult {
    pub true_acc: f64,
    pub atc_acc: f64,
}

impl BiasedSupportResult {
    pub fn bias(&self) -> f64 {
        self.atc_acc - self.true_acc
    }
}

/// ATC-MC fitted on the full-support source, evaluated on a target whose
/// `x_inv` support shrinks to `c_target`.
///
/// Requires `w_inv > 0` and `w_spr >= 0`; a positive `w_spr` must place the
/// error strip inside the target support, `gamma < w_spr / w_inv < c_target`.
pub fn run_biased_support_experiment(
    clf: &LinearSigmoidClassifier,
    config: &ToyConfig,
) -> Result<BiasedSupportResult> {
    clf.require_scope()?;
    config.validate()?;
    let c1 = config
        .c_target
        .ok_or_else(|| Error::invalid("biased-support experiment needs c_target"))?;
    if clf.w_spr < 0.0 {
        return Err(Error::OutOfTheoremScope(format!(
            "w_spr must be nonnegative, got {}",
            clf.w_spr
        )));
    }
    let ratio = clf.w_spr / clf.w_inv;
    if clf.w_spr > 0.0 && !(config.gamma < ratio && ratio < c1) {
        return Err(Error::OutOfTheoremScope(format!(
            "need gamma < w_spr/w_inv < c_target, got {ratio}"
        )));
    }
    let source = sample_toy_with(config, Role::Source, config.n, &mut rng::stream(config.seed, ids::SOURCE))?;
    let sp = toy_predict(clf, &source);
    let model = fit_atc(&score(&sp, ScoreKind::MaxConfidence), &sp.correctness()?)?;
    let target = sample_toy_with(config, Role::Target, config.n, &mut rng::stream(config.seed, ids::TARGET_BASE))?;
    let tp = toy_predict(clf, &target);
    Ok(BiasedSupportResult {
        true_acc: toy_true_accuracy(clf, config, Role::Target)?,
        atc_acc: atc_estimate(&model, &score(&tp, ScoreKind::MaxConfidence))?.predicted_accuracy,
    })
}

/// Smallest `|x_inv|` in the mismatch group.
pub fn minority_margin(sample: &ToySample) -> Result<f64> {
    (0..sample.len())
        .filter(|&i| sample.is_minority(i))
        .map(|i| sample.x_inv[i].abs())
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::EmptyGroup("no example has x_spr disagreeing with the label".into()))
}

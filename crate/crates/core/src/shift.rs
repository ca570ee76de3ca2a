//! Reweighted error under covariate or label shift, label-shift weight
//! estimation, and a two-Gaussian witness that the two reweightings disagree.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::PredictionSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::Clamped;

pub const EM_TOLERANCE: f64 = 1e-8;
pub const EM_MAX_ITERATIONS: usize = 10_000;

/// `(1/n) sum_i ratio_i * 1{wrong_i}` over labeled source points.
pub fn covariate_shift_error(source: &PredictionSet, ratios: &[f64]) -> Result<Clamped> {
    let correct = source.correctness()?;
    if ratios.len() != correct.len() {
        return Err(Error::invalid(format!(
            "{} density ratios for {} examples",
            ratios.len(),
            correct.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(Error::invalid(format!("density ratio {r} must be finite and nonnegative")));
    }
    let total: f64 = ratios
        .iter()
        .zip(&correct)
        .filter(|(_, &ok)| !ok)
        .map(|(r, _)| r)
        .sum();
    Ok(Clamped::unit(total / correct.len() as f64))
}

/// Per-class importance weights `w_y = p_t(y) / p_s(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceWeights {
    pub per_class: Vec<f64>,
}

impl ImportanceWeights {
    pub fn new(per_class: Vec<f64>) -> Result<Self> {
        if let Some(w) = per_class.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("class weight {w} must be finite and nonnegative")));
        }
        Ok(Self { per_class })
    }

    /// Weights from a target and source class prior.
    pub fn from_priors(target_prior: &[f64], source_prior: &[f64]) -> Result<Self> {
        if target_prior.len() != source_prior.len() {
            return Err(Error::invalid("priors differ in length"));
        }
        check_marginal(source_prior)?;
        Self::new(
            target_prior
                .iter()
                .zip(source_prior)
                .map(|(t, s)| t / s)
                .collect(),
        )
    }

    /// `sum_y w_y p_s(y)`, 1 for weights consistent with the source marginal.
    pub fn normalization(&self, source_prior: &[f64]) -> f64 {
        self.per_class.iter().zip(source_prior).map(|(w, p)| w * p).sum()
    }
}

/// `(1/n) sum_i w_{y_i} * 1{wrong_i}` over labeled source points.
pub fn label_shift_error(source: &PredictionSet, weights: &ImportanceWeights) -> Result<Clamped> {
    let labels = source.require_labels()?;
    if weights.per_class.len() != source.num_classes() {
        return Err(Error::invalid(format!(
            "{} class weights for {} classes",
            weights.per_class.len(),
            source.num_classes()
        )));
    }
    let correct = source.correctness()?;
    let total: f64 = labels
        .iter()
        .zip(&correct)
        .filter(|(_, &ok)| !ok)
        .map(|(&y, _)| weights.per_class[y])
        .sum();
    Ok(Clamped::unit(total / labels.len() as f64))
}

/// Output of the label-shift weight fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelShiftFit {
    pub weights: ImportanceWeights,
    /// Implied target class prior, `q_y = w_y p_s(y)`.
    pub target_prior: Vec<f64>,
    pub iterations: usize,
    /// Mean log-likelihood `(1/m) sum_i ln sum_y p_s(y|x_i) w_y` at every
    /// iterate, starting from `w = 1`.
    pub objective_trace: Vec<f64>,
}

/// Maximum-likelihood label-shift weights.
///
/// Maximizes `(1/m) sum_i ln sum_y p_s(y|x_i) w_y` over nonnegative `w` with
/// `sum_y w_y p_s(y) = 1`. The maximizer is found through the EM fixed point
/// on the target prior `q_y = w_y p_s(y)`:
///
/// `q'_y = (1/m) sum_i (q_y p_i(y) / p_s(y)) / (sum_c q_c p_i(c) / p_s(c))`
///
/// started at `q = p_s` and iterated until the largest coordinate change
/// drops below [`EM_TOLERANCE`]. Posteriors should be calibrated on source.
pub fn estimate_label_shift_weights(
    source_posteriors: &PredictionSet,
    source_label_marginal: &[f64],
    target: &PredictionSet,
) -> Result<LabelShiftFit> {
    let k = source_posteriors.num_classes();
    if source_label_marginal.len() != k || target.num_classes() != k {
        return Err(Error::invalid(format!(
            "class counts disagree: posteriors {k}, marginal {}, target {}",
            source_label_marginal.len(),
            target.num_classes()
        )));
    }
    check_marginal(source_label_marginal)?;
    if target.is_empty() {
        return Err(Error::invalid("target set is empty"));
    }

    // Target rows rescaled by 1/p_s(y) once; every step then only needs q.
    let ratios: Vec<Vec<f64>> = target
        .probs()
        .iter_rows()
        .map(|r| r.iter().zip(source_label_marginal).map(|(p, s)| p / s).collect())
        .collect();
    let m = ratios.len() as f64;
    let objective = |q: &[f64]| -> f64 {
        ratios
            .iter()
            .map(|r| r.iter().zip(q).map(|(a, b)| a * b).sum::<f64>().ln())
            .sum::<f64>()
            / m
    };

    let mut q = source_label_marginal.to_vec();
    let mut trace = vec![objective(&q)];
    let mut next = vec![0.0; k];
    for iteration in 1..=EM_MAX_ITERATIONS {
        next.iter_mut().for_each(|v| *v = 0.0);
        for r in &ratios {
            let denom: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
            if denom <= 0.0 {
                continue;
            }
            for y in 0..k {
                next[y] += q[y] * r[y] / denom;
            }
        }
        // renormalize to absorb rows skipped above and rounding drift
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change = q
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut q, &mut next);
        trace.push(objective(&q));
        if change < EM_TOLERANCE {
            return Ok(finish(q, source_label_marginal, iteration, trace));
        }
        if iteration == EM_MAX_ITERATIONS {
            let fit = finish(q, source_label_marginal, iteration, trace);
            return Err(Error::Unconverged {
                iterations: iteration,
                last_change: change,
                last_iterate: fit.weights.per_class,
            });
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn finish(q: Vec<f64>, source_prior: &[f64], iterations: usize, trace: Vec<f64>) -> LabelShiftFit {
    let per_class = q.iter().zip(source_prior).map(|(q, p)| q / p).collect();
    LabelShiftFit {
        weights: ImportanceWeights { per_class },
        target_prior: q,
        iterations,
        objective_trace: trace,
    }
}

fn check_marginal(marginal: &[f64]) -> Result<()> {
    if let Some((y, p)) = marginal
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p > 0.0) || !p.is_finite())
    {
        return Err(Error::invalid(format!(
            "source marginal of class {y} is {p}; every class needs positive mass"
        )));
    }
    let total: f64 = marginal.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("source marginal sums to {total}")));
    }
    Ok(())
}

/// Binary mixture of unit-variance Gaussians: class 0 at `mu1`, class 1 at `mu2`.
/// `alpha` is the source weight of class 0 and `beta` the target weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GaussianMixtureSpec {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !self.mu1.is_finite() || !self.mu2.is_finite() {
            return Err(Error::invalid("means must be finite"));
        }
        Ok(())
    }

    /// `p_t(x) / p_s(x)`; the Gaussian normalizer cancels.
    pub fn density_ratio(&self, x: f64) -> f64 {
        let a = -0.5 * (x - self.mu1).powi(2);
        let b = -0.5 * (x - self.mu2).powi(2);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        (self.beta * ea + (1.0 - self.beta) * eb) / (self.alpha * ea + (1.0 - self.alpha) * eb)
    }

    pub fn alpha_equals_beta(&self) -> bool {
        self.alpha == self.beta
    }
}

/// Monte-Carlo estimates of the target error of `f(x) = 1{x > tau}` under the
/// covariate-shift (`e1`) and label-shift (`e2`) reweightings of the same source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Result {
    pub e1: f64,
    pub e2: f64,
    pub stderr_e1: f64,
    pub stderr_e2: f64,
    /// Standard error of the paired difference `e1 - e2`.
    pub stderr_diff: f64,
    pub samples: usize,
    /// Set when `alpha == beta`, where both reweightings are the identity.
    pub alpha_equals_beta: bool,
}

impl Example1Result {
    /// `sqrt(se1^2 + se2^2)`, ignoring the positive correlation between the two.
    pub fn combined_stderr(&self) -> f64 {
        self.stderr_e1.hypot(self.stderr_e2)
    }
}

pub const EXAMPLE1_MIN_SAMPLES: usize = 1_000;

pub fn example1_errors(
    spec: &GaussianMixtureSpec,
    classifier_threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<Example1Result> {
    spec.validate()?;
    if samples < EXAMPLE1_MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {EXAMPLE1_MIN_SAMPLES} samples, got {samples}"
        )));
    }
    if !classifier_threshold.is_finite() {
        return Err(Error::invalid("classifier threshold must be finite"));
    }
    let w0 = spec.beta / spec.alpha;
    let w1 = (1.0 - spec.beta) / (1.0 - spec.alpha);

    let mut rng = rng::stream(seed, rng::ids::MONTE_CARLO);
    let mut e1 = Welford::default();
    let mut e2 = Welford::default();
    let mut diff = Welford::default();
    for _ in 0..samples {
        let class1 = rng.random::<f64>() >= spec.alpha;
        let noise: f64 = rng.sample(StandardNormal);
        let x = if class1 { spec.mu2 } else { spec.mu1 } + noise;
        let wrong = (x > classifier_threshold) != class1;
        let (a, b) = if wrong {
            (spec.density_ratio(x), if class1 { w1 } else { w0 })
        } else {
            (0.0, 0.0)
        };
        e1.push(a);
        e2.push(b);
        diff.push(a - b);
    }
    let n = samples as f64;
    Ok(Example1Result {
        e1: e1.mean,
        e2: e2.mean,
        stderr_e1: (e1.variance() / n).sqrt(),
        stderr_e2: (e2.variance() / n).sqrt(),
        stderr_diff: (diff.variance() / n).sqrt(),
        samples,
        alpha_equals_beta: spec.alpha_equals_beta(),
    })
}

#[derive(Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{error_rate, Matrix};

    fn labeled(rows: &[[f64; 2]], labels: &[usize]) -> PredictionSet {
        PredictionSet::new(Matrix::from_rows(rows).unwrap(), Some(labels.to_vec()), "s").unwrap()
    }

    fn onehot_binary(classes: &[usize]) -> PredictionSet {
        let rows: Vec<[f64; 2]> = classes
            .iter()
            .map(|&c| if c == 0 { [1.0, 0.0] } else { [0.0, 1.0] })
            .collect();
        PredictionSet::new(Matrix::from_rows(&rows).unwrap(), None, "t").unwrap()
    }

    // rows predicting [0, 1, 0, 0] against labels [0, 0, 1, 1] are wrong at 1, 2, 3
    fn four() -> PredictionSet {
        labeled(
            &[[0.9, 0.1], [0.3, 0.7], [0.6, 0.4], [0.8, 0.2]],
            &[0, 0, 1, 1],
        )
    }

    #[test]
    fn covariate_examples() {
        let s = four();
        let ones = covariate_shift_error(&s, &[1.0; 4]).unwrap();
        assert_eq!(ones.value, error_rate(&s).unwrap());

        // errors only where the ratio is zero
        assert_eq!(covariate_shift_error(&s, &[3.0, 0.0, 0.0, 0.0]).unwrap().value, 0.0);

        // err flags [1,1,0,1] with ratios [2,0,1,1]
        let s = labeled(
            &[[0.2, 0.8], [0.2, 0.8], [0.8, 0.2], [0.8, 0.2]],
            &[0, 0, 0, 1],
        );
        let e = covariate_shift_error(&s, &[2.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(e.value, 0.75);

        assert!(matches!(
            covariate_shift_error(&s, &[1.0, -1.0, 1.0, 1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn covariate_clamps() {
        let s = labeled(&[[0.2, 0.8]], &[0]);
        let e = covariate_shift_error(&s, &[3.0]).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(e.was_clamped());
    }

    #[test]
    fn label_examples() {
        let s = four();
        let w = ImportanceWeights::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(label_shift_error(&s, &w).unwrap().value, error_rate(&s).unwrap());

        // all errors in class 0: weight 2 on class 0 doubles the error mass
        let s = labeled(&[[0.2, 0.8], [0.9, 0.1], [0.2, 0.8], [0.3, 0.7]], &[0, 0, 1, 1]);
        let base = error_rate(&s).unwrap();
        let w = ImportanceWeights::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(label_shift_error(&s, &w).unwrap().value, 2.0 * base);

        // labels [0,0,1,1], err [1,0,0,1], w = [1.5, 0.5]
        let s = labeled(&[[0.2, 0.8], [0.9, 0.1], [0.2, 0.8], [0.7, 0.3]], &[0, 0, 1, 1]);
        let w = ImportanceWeights::new(vec![1.5, 0.5]).unwrap();
        assert_eq!(label_shift_error(&s, &w).unwrap().value, 0.5);

        let w3 = ImportanceWeights::new(vec![1.0; 3]).unwrap();
        assert!(matches!(label_shift_error(&s, &w3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn onehot_posteriors_recover_label_frequencies() {
        // 90 targets of class 0, 10 of class 1
        let classes: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let target = onehot_binary(&classes);
        let source = onehot_binary(&[0, 1]);
        let fit = estimate_label_shift_weights(&source, &[0.5, 0.5], &target).unwrap();
        // oracle: empirical target frequency over the source marginal
        let freq0 = classes.iter().filter(|&&c| c == 0).count() as f64 / 100.0;
        assert!((fit.weights.per_class[0] - freq0 / 0.5).abs() < 1e-9);
        assert!((fit.weights.per_class[1] - (1.0 - freq0) / 0.5).abs() < 1e-9);
        assert!((fit.weights.per_class[0] - 1.8).abs() < 1e-9);
        assert!((fit.weights.per_class[1] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn single_class_target_concentrates() {
        let target = onehot_binary(&[0; 20]);
        let source = onehot_binary(&[0, 1]);
        let fit = estimate_label_shift_weights(&source, &[0.4, 0.6], &target).unwrap();
        assert!((fit.weights.per_class[0] - 1.0 / 0.4).abs() < 1e-9);
        assert!(fit.weights.per_class[1].abs() < 1e-9);
        assert!((fit.weights.normalization(&[0.4, 0.6]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn soft_posteriors_keep_constraint_and_monotone_objective() {
        let rows: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let a = ((i * 37) % 100) as f64 / 100.0 * 0.8 + 0.1;
                let b = (1.0 - a) * (((i * 11) % 10) as f64 / 10.0);
                [a, b, 1.0 - a - b]
            })
            .collect();
        let target = PredictionSet::new(Matrix::from_rows(&rows).unwrap(), None, "t").unwrap();
        let marginal = [0.2, 0.3, 0.5];
        let fit = estimate_label_shift_weights(&target, &marginal, &target).unwrap();
        assert!((fit.weights.normalization(&marginal) - 1.0).abs() < 1e-6);
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-12, "{:?}", pair);
        }
    }

    #[test]
    fn rejects_zero_marginal() {
        let t = onehot_binary(&[0, 1]);
        assert!(matches!(
            estimate_label_shift_weights(&t, &[1.0, 0.0], &t),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn example1_rejects_degenerate_mixture() {
        for alpha in [0.0, 1.0] {
            let spec = GaussianMixtureSpec { mu1: -2.0, mu2: 2.0, alpha, beta: 0.3 };
            assert!(matches!(example1_errors(&spec, 0.0, 10_000, 1), Err(Error::InvalidInput(_))));
        }
        let spec = GaussianMixtureSpec { mu1: -2.0, mu2: 2.0, alpha: 0.5, beta: 0.3 };
        assert!(example1_errors(&spec, 0.0, 999, 1).is_err());
    }

    #[test]
    fn example1_equal_mixtures_agree() {
        for (mu1, mu2, tau, a) in [(-2.0, 2.0, 0.0, 0.4), (0.0, 1.0, 0.7, 0.8)] {
            let spec = GaussianMixtureSpec { mu1, mu2, alpha: a, beta: a };
            let r = example1_errors(&spec, tau, 20_000, 3).unwrap();
            assert!((r.e1 - r.e2).abs() <= 3.0 * r.combined_stderr());
            assert!(r.alpha_equals_beta);
        }
    }

    /// Trapezoid quadrature of both reweighted errors.
    fn example1_quadrature(spec: &GaussianMixtureSpec, tau: f64) -> (f64, f64) {
        let phi = |x: f64, mu: f64| (-(x - mu).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // odd step count keeps x = 0 off the grid so the mirror image is exact
        let (lo, hi, steps) = (-14.0, 14.0, 400_001);
        let h = (hi - lo) / steps as f64;
        let (mut e1, mut e2) = (0.0, 0.0);
        for i in 0..=steps {
            let x = lo + h * i as f64;
            let wt = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let ps0 = spec.alpha * phi(x, spec.mu1);
            let ps1 = (1.0 - spec.alpha) * phi(x, spec.mu2);
            let pt = spec.beta * phi(x, spec.mu1) + (1.0 - spec.beta) * phi(x, spec.mu2);
            let ratio = pt / (ps0 + ps1);
            let (wrong0, wrong1) = if x > tau { (ps0, 0.0) } else { (0.0, ps1) };
            e1 += wt * ratio * (wrong0 + wrong1);
            e2 += wt * (spec.beta / spec.alpha * wrong0 + (1.0 - spec.beta) / (1.0 - spec.alpha) * wrong1);
        }
        (e1 * h, e2 * h)
    }

    #[test]
    fn example1_monte_carlo_matches_quadrature() {
        for (alpha, beta) in [(0.7, 0.3), (0.3, 0.7), (0.5, 0.2)] {
            let spec = GaussianMixtureSpec { mu1: -2.0, mu2: 2.0, alpha, beta };
            let (q1, q2) = example1_quadrature(&spec, 0.0);
            let r = example1_errors(&spec, 0.0, 200_000, 11).unwrap();
            assert!((r.e1 - q1).abs() < 4.0 * r.stderr_e1, "{} vs {q1}", r.e1);
            assert!((r.e2 - q2).abs() < 4.0 * r.stderr_e2, "{} vs {q2}", r.e2);
        }
    }

    #[test]
    fn example1_difference_is_mirror_symmetric() {
        // Mirroring x -> -x swaps the classes and maps (alpha, beta) to
        // (1 - alpha, 1 - beta). With means at -2/+2 and tau = 0 the swap
        // (0.7, 0.3) -> (0.3, 0.7) is exactly that mirror, so E1 - E2 keeps
        // its sign and magnitude.
        let a = GaussianMixtureSpec { mu1: -2.0, mu2: 2.0, alpha: 0.7, beta: 0.3 };
        let b = GaussianMixtureSpec { alpha: 0.3, beta: 0.7, ..a };
        let (a1, a2) = example1_quadrature(&a, 0.0);
        let (b1, b2) = example1_quadrature(&b, 0.0);
        assert!(a1 - a2 > 0.0);
        assert!(((a1 - a2) - (b1 - b2)).abs() < 1e-9);
    }
}

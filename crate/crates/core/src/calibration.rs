//! Temperature scaling fitted on labeled source validation logits.

use serde::{Deserialize, Serialize};

use crate::data::{softmax_rows, Matrix, PredictionSet};
use crate::error::{Error, Result};

pub const MIN_TEMPERATURE: f64 = 0.01;
pub const MAX_TEMPERATURE: f64 = 100.0;

/// Golden-section stops once the bracket on ln T is narrower than this.
/// Well inside the 1e-4 accuracy we promise for ln T.
const LN_T_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub temperature: f64,
    pub nll_at_fit: f64,
    /// The optimum sat on one of the search bounds.
    pub clamped: bool,
}

impl TemperatureModel {
    pub fn identity() -> Self {
        Self {
            temperature: 1.0,
            nll_at_fit: f64::NAN,
            clamped: false,
        }
    }
}

/// Mean negative log-likelihood of `softmax(logits / t)` at the labels.
pub fn mean_nll(logits: &Matrix, labels: &[usize], temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse: f64 = row.iter().map(|&z| ((z - m) / temperature).exp()).sum::<f64>().ln();
        total += lse - (row[y] - m) / temperature;
    }
    total / labels.len() as f64
}

/// Minimizes mean NLL over ln T in `[ln 0.01, ln 100]` by golden-section search.
///
/// The NLL is convex in 1/T, hence unimodal in ln T. The interior optimum is
/// compared against both bounds and a bound wins when it is at least as good,
/// in which case the model is flagged as clamped.
pub fn fit_temperature(logits: &Matrix, labels: &[usize]) -> Result<TemperatureModel> {
    if logits.is_empty() {
        return Err(Error::invalid("no logits to calibrate on"));
    }
    if labels.len() != logits.rows() {
        return Err(Error::invalid(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if let Some(bad) = logits.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite logit {bad}")));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::invalid(format!("label {y} out of range")));
    }

    let f = |ln_t: f64| mean_nll(logits, labels, ln_t.exp());
    let (lo, hi) = (MIN_TEMPERATURE.ln(), MAX_TEMPERATURE.ln());
    let ln_t = golden_section_min(f, lo, hi, LN_T_TOL);

    let interior = (ln_t, f(ln_t));
    let lower = (lo, f(lo));
    let upper = (hi, f(hi));
    let (best, clamped) = if lower.1 <= interior.1 && lower.1 <= upper.1 {
        (lower, true)
    } else if upper.1 <= interior.1 {
        (upper, true)
    } else {
        (interior, false)
    };
    let temperature = if clamped {
        if best.0 == lo {
            MIN_TEMPERATURE
        } else {
            MAX_TEMPERATURE
        }
    } else {
        best.0.exp()
    };
    Ok(TemperatureModel {
        temperature,
        nll_at_fit: best.1,
        clamped,
    })
}

pub fn apply_temperature(logits: &Matrix, model: &TemperatureModel) -> Result<PredictionSet> {
    softmax_rows(logits, model.temperature)
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::argmax;
    use proptest::prelude::*;

    fn grid_argmin_ln_t(logits: &Matrix, labels: &[usize], points: usize) -> f64 {
        let (lo, hi) = (MIN_TEMPERATURE.ln(), MAX_TEMPERATURE.ln());
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .map(|l| (l, mean_nll(logits, labels, l.exp())))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn recovers_stationary_temperature() {
        let logits = Matrix::from_rows(&[[2.0, 0.0]; 4]).unwrap();
        let labels = [0, 0, 0, 1];
        let m = fit_temperature(&logits, &labels).unwrap();
        let expected = 2.0 / 3f64.ln();
        assert!((m.temperature - expected).abs() < 1e-6, "{}", m.temperature);
        assert!(!m.clamped);
        let grid = grid_argmin_ln_t(&logits, &labels, 10_000);
        assert!((grid - m.temperature.ln()).abs() < 1e-2);
    }

    #[test]
    fn monotone_objectives_clamp() {
        let logits = Matrix::from_rows(&[[2.0, 0.0]]).unwrap();
        let m = fit_temperature(&logits, &[0]).unwrap();
        assert_eq!(m.temperature, MIN_TEMPERATURE);
        assert!(m.clamped);
        assert!((grid_argmin_ln_t(&logits, &[0], 10_000) - MIN_TEMPERATURE.ln()).abs() < 1e-12);

        let m = fit_temperature(&logits, &[1]).unwrap();
        assert_eq!(m.temperature, MAX_TEMPERATURE);
        assert!(m.clamped);
        assert!((grid_argmin_ln_t(&logits, &[1], 10_000) - MAX_TEMPERATURE.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let logits = Matrix::from_rows(&[[f64::INFINITY, 0.0]]).unwrap();
        assert!(matches!(
            fit_temperature(&logits, &[0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn apply_examples() {
        let logits = Matrix::from_rows(&[[1.5, -0.5, 0.2]]).unwrap();
        let plain = softmax_rows(&logits, 1.0).unwrap();
        let same = apply_temperature(&logits, &TemperatureModel::identity()).unwrap();
        assert_eq!(plain, same);

        let hot = TemperatureModel {
            temperature: 100.0,
            nll_at_fit: 0.0,
            clamped: true,
        };
        let p = apply_temperature(&Matrix::from_rows(&[[4.0, 0.0]]).unwrap(), &hot).unwrap();
        assert!((p.probs().row(0)[0] - 0.51).abs() < 0.01);
        assert!((p.probs().row(0)[1] - 0.49).abs() < 0.01);

        for t in [0.05, 1.0, 30.0] {
            let m = TemperatureModel {
                temperature: t,
                ..hot
            };
            let p = apply_temperature(&Matrix::from_rows(&[[0.0, 0.0]]).unwrap(), &m).unwrap();
            assert_eq!(p.probs().row(0), &[0.5, 0.5]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fit_never_worse_than_identity(
            rows in prop::collection::vec((prop::collection::vec(-6.0f64..6.0, 3), 0usize..3), 1..40)
        ) {
            let logits: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let logits = Matrix::from_rows(&logits).unwrap();
            let m = fit_temperature(&logits, &labels).unwrap();
            prop_assert!(m.nll_at_fit <= mean_nll(&logits, &labels, 1.0) + 1e-9);
            let grid = grid_argmin_ln_t(&logits, &labels, 10_000);
            let fitted = m.temperature.ln();
            // a flat objective makes the argmin ill-posed; compare objective values then
            let gap = (mean_nll(&logits, &labels, grid.exp()) - m.nll_at_fit).abs();
            prop_assert!((grid - fitted).abs() < 1e-2 || gap < 1e-9, "{grid} vs {fitted}");
        }

        #[test]
        fn binary_temperature_keeps_argmax_and_order(
            logits in prop::collection::vec(prop::collection::vec(-8.0f64..8.0, 2), 2..50),
            t in 0.01f64..100.0,
        ) {
            let m = Matrix::from_rows(&logits).unwrap();
            let before = softmax_rows(&m, 1.0).unwrap();
            let after = softmax_rows(&m, t).unwrap();
            prop_assert_eq!(before.predicted(), after.predicted());
            let conf = |p: &PredictionSet, i: usize| p.probs().row(i)[argmax(p.probs().row(i))];
            for i in 0..logits.len() {
                for j in 0..logits.len() {
                    if conf(&before, i) < conf(&before, j) {
                        prop_assert!(conf(&after, i) <= conf(&after, j));
                    }
                }
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use super::{Estimate, Method};
use crate::data::{score, PredictionSet, ScoreKind};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Equal-width histogram of source and target confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub edges: Vec<f64>,
    pub source_mass: Vec<f64>,
    /// Source error rate per bin; 0 for bins without source points.
    pub source_err_rate: Vec<f64>,
    pub target_mass: Vec<f64>,
}

impl BinTable {
    pub fn build(
        source_scores: &[f64],
        source_correct: &[bool],
        target_scores: &[f64],
        lo: f64,
        hi: f64,
        bins: usize,
    ) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("bad bin range [{lo}, {hi}]")));
        }
        if source_scores.len() != source_correct.len() {
            return Err(Error::invalid("source scores and correctness differ in length"));
        }
        if source_scores.is_empty() || target_scores.is_empty() {
            return Err(Error::invalid("binning needs non-empty source and target"));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|b| lo + width * b as f64).collect();
        let table = Self {
            edges,
            source_mass: vec![0.0; bins],
            source_err_rate: vec![0.0; bins],
            target_mass: vec![0.0; bins],
        };

        let mut src_count = vec![0usize; bins];
        let mut src_wrong = vec![0usize; bins];
        for (&s, &ok) in source_scores.iter().zip(source_correct) {
            let b = table.bin_of(s);
            src_count[b] += 1;
            src_wrong[b] += usize::from(!ok);
        }
        let mut tgt_count = vec![0usize; bins];
        for &s in target_scores {
            tgt_count[table.bin_of(s)] += 1;
        }

        let n = source_scores.len() as f64;
        let m = target_scores.len() as f64;
        let mut table = table;
        for b in 0..bins {
            table.source_mass[b] = src_count[b] as f64 / n;
            table.target_mass[b] = tgt_count[b] as f64 / m;
            if src_count[b] > 0 {
                table.source_err_rate[b] = src_wrong[b] as f64 / src_count[b] as f64;
            }
        }
        Ok(table)
    }

    pub fn bins(&self) -> usize {
        self.source_mass.len()
    }

    /// Bin index of a score; values outside the range land in the end bins.
    pub fn bin_of(&self, s: f64) -> usize {
        let lo = self.edges[0];
        let hi = self.edges[self.bins()];
        let width = (hi - lo) / self.bins() as f64;
        let b = ((s - lo) / width).floor();
        if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(self.bins() - 1)
        }
    }

    /// `sum_b target_mass[b] * source_err_rate[b]`, falling back to the
    /// global source error for target mass in bins without source points.
    /// Also returns the target mass that needed the fallback.
    pub fn reweighted_error(&self, global_source_error: f64) -> (f64, f64) {
        let mut err = 0.0;
        let mut orphan = 0.0;
        for b in 0..self.bins() {
            if self.source_mass[b] > 0.0 {
                err += self.target_mass[b] * self.source_err_rate[b];
            } else if self.target_mass[b] > 0.0 {
                err += self.target_mass[b] * global_source_error;
                orphan += self.target_mass[b];
            }
        }
        (err, orphan)
    }
}

/// Importance-reweighted error over an explicit score range.
pub fn im_estimate_scores(
    source_scores: &[f64],
    source_correct: &[bool],
    target_scores: &[f64],
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<Estimate> {
    let table = BinTable::build(source_scores, source_correct, target_scores, lo, hi, bins)?;
    let wrong = source_correct.iter().filter(|&&c| !c).count();
    let global = wrong as f64 / source_correct.len() as f64;
    let (err, orphan) = table.reweighted_error(global);
    let mut e = Estimate::from_raw_error(Method::Im, err).with("bins", bins as f64);
    if orphan > 0.0 {
        e = e
            .with("empty_source_bin", 1.0)
            .with("fallback_target_mass", orphan);
    }
    Ok(e)
}

/// Importance reweighting of the source 0-1 error in max-confidence space,
/// with `bins` equal-width bins over `[1/k, 1]`.
pub fn im_estimate(source: &PredictionSet, target: &PredictionSet, bins: usize) -> Result<Estimate> {
    if bins < 2 {
        return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
    }
    if source.num_classes() != target.num_classes() {
        return Err(Error::invalid("source and target have different class counts"));
    }
    let correct = source.correctness()?;
    let k = source.num_classes();
    if k < 2 {
        return Err(Error::invalid("binning needs at least two classes"));
    }
    let s = score(source, ScoreKind::MaxConfidence);
    let t = score(target, ScoreKind::MaxConfidence);
    im_estimate_scores(&s.scores, &correct, &t.scores, 1.0 / k as f64, 1.0, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use proptest::prelude::*;

    /// Per-example reweighting: each source point carries the density ratio of its bin.
    fn per_example_oracle(
        src: &[f64],
        correct: &[bool],
        tgt: &[f64],
        lo: f64,
        hi: f64,
        bins: usize,
    ) -> f64 {
        let bin = |s: f64| {
            let w = (hi - lo) / bins as f64;
            (((s - lo) / w).floor().max(0.0) as usize).min(bins - 1)
        };
        let n = src.len() as f64;
        let m = tgt.len() as f64;
        let src_frac = |b| src.iter().filter(|&&s| bin(s) == b).count() as f64 / n;
        let tgt_frac = |b| tgt.iter().filter(|&&s| bin(s) == b).count() as f64 / m;
        let reweighted = src
            .iter()
            .zip(correct)
            .map(|(&s, &ok)| {
                let b = bin(s);
                let w = tgt_frac(b) / src_frac(b);
                w * f64::from(u8::from(!ok))
            })
            .sum::<f64>()
            / n;
        // target mass with no source support is charged the global source error
        let global = correct.iter().filter(|&&c| !c).count() as f64 / n;
        let orphan: f64 = (0..bins)
            .filter(|&b| src_frac(b) == 0.0)
            .map(tgt_frac)
            .sum();
        reweighted + orphan * global
    }

    #[test]
    fn worked_example() {
        let src = [0.3, 0.4, 0.8, 0.9];
        let ok = [false, true, true, false];
        let tgt = [0.2, 0.35, 0.85, 0.88, 0.95];
        let table = BinTable::build(&src, &ok, &tgt, 0.0, 1.0, 2).unwrap();
        assert_eq!(table.source_err_rate, vec![0.5, 0.5]);
        assert_eq!(table.target_mass, vec![0.4, 0.6]);
        let e = im_estimate_scores(&src, &ok, &tgt, 0.0, 1.0, 2).unwrap();
        assert!((e.predicted_error - 0.5).abs() < 1e-15);
        assert!((per_example_oracle(&src, &ok, &tgt, 0.0, 1.0, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn target_equal_source_gives_source_error() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| {
            let p = 0.5 + i as f64 / 80.0;
            [p, 1.0 - p]
        }).collect();
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 3 == 0)).collect();
        let src = PredictionSet::new(Matrix::from_rows(&rows).unwrap(), Some(labels), "s").unwrap();
        let e = im_estimate(&src, &src, 10).unwrap();
        let err = crate::data::error_rate(&src).unwrap();
        assert!((e.predicted_error - err).abs() < 1e-12);
    }

    #[test]
    fn empty_source_bin_falls_back() {
        let src = [0.1, 0.2, 0.3];
        let ok = [true, false, true];
        let tgt = [0.9, 0.95];
        let e = im_estimate_scores(&src, &ok, &tgt, 0.0, 1.0, 4).unwrap();
        assert!((e.predicted_error - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.diagnostics["empty_source_bin"], 1.0);
        assert_eq!(e.diagnostics["fallback_target_mass"], 1.0);
    }

    #[test]
    fn rejects_too_few_bins() {
        assert!(matches!(
            im_estimate_scores(&[0.5], &[true], &[0.5], 0.0, 1.0, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    proptest! {
        #[test]
        fn matches_per_example_reweighting(
            src in prop::collection::vec((0.5f64..=1.0, any::<bool>()), 1..60),
            tgt in prop::collection::vec(0.5f64..=1.0, 1..60),
            bins in 2usize..15,
        ) {
            let scores: Vec<f64> = src.iter().map(|p| p.0).collect();
            let ok: Vec<bool> = src.iter().map(|p| p.1).collect();
            let e = im_estimate_scores(&scores, &ok, &tgt, 0.5, 1.0, bins).unwrap();
            let oracle = per_example_oracle(&scores, &ok, &tgt, 0.5, 1.0, bins);
            prop_assert!((e.predicted_error - oracle).abs() < 1e-12, "{} vs {}", e.predicted_error, oracle);
        }
    }
}

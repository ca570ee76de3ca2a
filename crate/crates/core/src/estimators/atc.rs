use serde::{Deserialize, Serialize};

use super::{Estimate, Method};
use crate::data::{ScoreKind, ScoreVector};
use crate::error::{Error, Result};

/// Score threshold fitted on labeled source data.
///
/// `threshold` is `-inf` when every source point was correct and `+inf` when
/// every point was wrong.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtcModel {
    #[serde(with = "crate::io::json_f64")]
    pub threshold: f64,
    pub kind: ScoreKind,
    pub source_error: f64,
    pub n_source: usize,
}

/// Picks `t` so that the number of source scores strictly below `t` equals
/// the number of misclassified source points.
///
/// With distinct scores this is the `(k+1)`-th smallest score, `k` being the
/// error count. When ties make an exact match impossible the threshold
/// minimizing `|#{s < t} - k|` over every distinct score and the two infinite
/// sentinels is used, the smallest such `t` on further ties.
pub fn fit_atc(source_scores: &ScoreVector, source_correct: &[bool]) -> Result<AtcModel> {
    let n = source_scores.len();
    if n == 0 {
        return Err(Error::invalid("cannot fit a threshold on zero source points"));
    }
    if source_correct.len() != n {
        return Err(Error::invalid(format!(
            "{n} scores but {} correctness flags",
            source_correct.len()
        )));
    }
    if let Some(bad) = source_scores.scores.iter().find(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {bad} is not a number")));
    }
    let k = source_correct.iter().filter(|&&c| !c).count();
    let model = |threshold| AtcModel {
        threshold,
        kind: source_scores.kind,
        source_error: k as f64 / n as f64,
        n_source: n,
    };
    if k == 0 {
        return Ok(model(f64::NEG_INFINITY));
    }
    if k == n {
        return Ok(model(f64::INFINITY));
    }

    let mut sorted = source_scores.scores.clone();
    sorted.sort_by(f64::total_cmp);
    let candidate = sorted[k];
    if count_below(&sorted, candidate) == k {
        return Ok(model(candidate));
    }

    // Ties straddle position k. In sorted order, the first index of each
    // distinct value is how many scores lie below it.
    let mut best = (k, f64::NEG_INFINITY); // (|count - k|, t) at t = -inf
    for (i, &s) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1] == s {
            continue;
        }
        let gap = i.abs_diff(k);
        if gap < best.0 {
            best = (gap, s);
        }
    }
    if n - k < best.0 {
        best = (n - k, f64::INFINITY);
    }
    Ok(model(best.1))
}

fn count_below(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&s| s < t)
}

/// Predicted target error: the fraction of target scores strictly below the threshold.
pub fn atc_estimate(model: &AtcModel, target_scores: &ScoreVector) -> Result<Estimate> {
    if target_scores.kind != model.kind {
        return Err(Error::invalid(format!(
            "threshold was fitted on {:?} scores, target scores are {:?}",
            model.kind, target_scores.kind
        )));
    }
    if target_scores.is_empty() {
        return Err(Error::invalid("empty target"));
    }
    let below = target_scores
        .scores
        .iter()
        .filter(|&&s| s < model.threshold)
        .count();
    let err = below as f64 / target_scores.len() as f64;
    Ok(Estimate::from_raw_error(Method::atc_score(model.kind), err)
        .with("threshold", clamp_for_json(model.threshold)))
}

/// JSON has no infinities; diagnostics carry the largest finite value instead.
fn clamp_for_json(t: f64) -> f64 {
    t.clamp(f64::MIN, f64::MAX)
}

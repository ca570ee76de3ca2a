use super::{Estimate, Method};
use crate::data::{error_rate, PredictionSet};
use crate::error::{Error, Result};

/// Average confidence: predicted accuracy is the mean max-probability on the target.
pub fn ac_estimate(target: &PredictionSet) -> Estimate {
    let conf = target.mean_max_confidence();
    Estimate::from_raw_error(Method::Ac, 1.0 - conf).with("target_confidence", conf)
}

/// Difference of confidences: source error plus the drop in mean confidence
/// from source to target.
///
/// `paper_form_error` in the diagnostics keeps the opposite-sign variant
/// `err_s + conf_t - conf_s`, unclamped.
pub fn doc_estimate(source: &PredictionSet, target: &PredictionSet) -> Result<Estimate> {
    let err_s = error_rate(source)?;
    let conf_s = source.mean_max_confidence();
    let conf_t = target.mean_max_confidence();
    Ok(
        Estimate::from_raw_error(Method::Doc, err_s + (conf_s - conf_t))
            .with("source_error", err_s)
            .with("source_confidence", conf_s)
            .with("target_confidence", conf_t)
            .with("paper_form_error", err_s + conf_t - conf_s),
    )
}

/// Disagreement rate between two models' predictions on the same target rows.
pub fn gde_estimate(target_a: &PredictionSet, target_b: &PredictionSet) -> Result<Estimate> {
    if target_a.len() != target_b.len() || target_a.num_classes() != target_b.num_classes() {
        return Err(Error::invalid(format!(
            "paired predictions differ in shape: {}x{} vs {}x{}",
            target_a.len(),
            target_a.num_classes(),
            target_b.len(),
            target_b.num_classes()
        )));
    }
    let disagree = target_a
        .predicted()
        .into_iter()
        .zip(target_b.predicted())
        .filter(|(a, b)| a != b)
        .count();
    Ok(Estimate::from_raw_error(
        Method::Gde,
        disagree as f64 / target_a.len() as f64,
    ))
}

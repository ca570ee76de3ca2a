//! Report assembly, mean absolute estimation error and robust line fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::ScoreKind;
use crate::error::{Error, Result};
use crate::estimators::{Estimate, Method};
use crate::Clamped;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub target: String,
    pub method: Method,
    pub predicted_error: f64,
    pub predicted_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_accuracy: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub calibrated: bool,
    pub score_kinds: Vec<ScoreKind>,
    pub seed: u64,
    /// Unix seconds; left out unless explicitly requested so reports stay reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub entries: Vec<ReportEntry>,
    pub metadata: ReportMetadata,
}

impl EstimateReport {
    pub fn new(metadata: ReportMetadata) -> Self {
        Self {
            entries: Vec::new(),
            metadata,
        }
    }

    /// Adds an entry; a second entry for the same `(target, method)` is rejected.
    pub fn push(
        &mut self,
        target: &str,
        estimate: &Estimate,
        true_accuracy: Option<f64>,
    ) -> Result<()> {
        if self
            .entries
            .iter()
            .any(|e| e.target == target && e.method == estimate.method)
        {
            return Err(Error::invalid(format!(
                "duplicate report entry for target '{target}' and method {}",
                estimate.method
            )));
        }
        self.entries.push(ReportEntry {
            target: target.to_owned(),
            method: estimate.method,
            predicted_error: estimate.predicted_error,
            predicted_accuracy: estimate.predicted_accuracy,
            true_accuracy,
            diagnostics: estimate.diagnostics.clone(),
        });
        Ok(())
    }

    pub fn entries_for(&self, method: Method) -> impl Iterator<Item = &ReportEntry> {
        self.entries.iter().filter(move |e| e.method == method)
    }
}

/// Mean `|predicted - true|` accuracy gap over a method's entries, as a fraction.
///
/// Multiply by 100 (see [`mae_points`]) for accuracy points.
pub fn mae(report: &EstimateReport, method: Method) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for e in report.entries_for(method) {
        let truth = e.true_accuracy.ok_or_else(|| {
            Error::MissingLabels(format!("no true accuracy for target '{}'", e.target))
        })?;
        total += (e.predicted_accuracy - truth).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid(format!("report has no entries for {method}")));
    }
    Ok(total / count as f64)
}

pub fn mae_points(report: &EstimateReport, method: Method) -> Result<f64> {
    Ok(100.0 * mae(report, method)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    SiegelRepeatedMedians,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub method: FitMethod,
}

impl LinearFit {
    pub fn identity() -> Self {
        Self {
            slope: 1.0,
            intercept: 0.0,
            method: FitMethod::SiegelRepeatedMedians,
        }
    }
}

/// Median with even-length lists averaged at the midpoint. Sorts in place.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Siegel's repeated-medians line fit.
///
/// For each point, the median of its slopes to every other point with a
/// different `x`; the fitted slope is the median of those. The intercept is
/// the median of `y_i - slope * x_i`.
pub fn siegel_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("fit inputs must be finite"));
    }
    let mut per_point = Vec::with_capacity(xs.len());
    let mut slopes = Vec::with_capacity(xs.len());
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        slopes.clear();
        slopes.extend(
            xs.iter()
                .zip(ys)
                .enumerate()
                .filter(|&(j, (&xj, _))| j != i && xj != xi)
                .map(|(_, (&xj, &yj))| (yj - yi) / (xj - xi)),
        );
        if !slopes.is_empty() {
            per_point.push(median(&mut slopes));
        }
    }
    if per_point.is_empty() {
        return Err(Error::DegenerateInput(
            "need at least two distinct x values".into(),
        ));
    }
    let slope = median(&mut per_point);
    let mut offsets: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - slope * x).collect();
    let intercept = median(&mut offsets);
    Ok(LinearFit {
        slope,
        intercept,
        method: FitMethod::SiegelRepeatedMedians,
    })
}

/// `slope * predicted + intercept`, clamped into `[0, 1]`.
pub fn apply_fit(fit: &LinearFit, predicted: f64) -> Clamped {
    Clamped::unit(fit.slope * predicted + fit.intercept)
}

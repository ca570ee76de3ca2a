//! Accuracy estimators for an unlabeled target set.

mod atc;
mod baselines;
mod importance;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use atc::{atc_estimate, fit_atc, AtcModel};
pub use baselines::{ac_estimate, doc_estimate, gde_estimate};
pub use importance::{im_estimate, im_estimate_scores, BinTable, DEFAULT_BINS};

use crate::data::ScoreKind;
use crate::error::Error;
use crate::Clamped;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "atc-mc")]
    AtcMc,
    #[serde(rename = "atc-ne")]
    AtcNe,
    #[serde(rename = "ac")]
    Ac,
    #[serde(rename = "doc")]
    Doc,
    #[serde(rename = "im")]
    Im,
    #[serde(rename = "gde")]
    Gde,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::AtcMc,
        Method::AtcNe,
        Method::Ac,
        Method::Doc,
        Method::Im,
        Method::Gde,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AtcMc => "atc-mc",
            Method::AtcNe => "atc-ne",
            Method::Ac => "ac",
            Method::Doc => "doc",
            Method::Im => "im",
            Method::Gde => "gde",
        }
    }

    pub fn atc_score(kind: ScoreKind) -> Method {
        match kind {
            ScoreKind::MaxConfidence => Method::AtcMc,
            ScoreKind::NegativeEntropy => Method::AtcNe,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// One method's prediction for one target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub predicted_error: f64,
    pub predicted_accuracy: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Estimate {
    /// Builds an estimate from a raw error, clamping into `[0, 1]`.
    ///
    /// A clamp leaves `raw_error` and `clamped = 1` in the diagnostics.
    pub(crate) fn from_raw_error(method: Method, raw_error: f64) -> Self {
        let c = Clamped::unit(raw_error);
        let mut diagnostics = BTreeMap::new();
        if c.was_clamped() {
            diagnostics.insert("raw_error".to_owned(), c.raw);
            diagnostics.insert("clamped".to_owned(), 1.0);
        }
        Self {
            method,
            predicted_error: c.value,
            predicted_accuracy: 1.0 - c.value,
            diagnostics,
        }
    }

    pub(crate) fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_owned(), value);
        self
    }
}

//! Indicator computation: the formula language, built-in indicators and
//! classification into bands.

pub mod bands;
pub mod cfid;
pub mod compliance;
pub mod formula;
pub mod mcfi;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bands::{classify, ClassificationBand, ClassifyPolicy};
pub use cfid::{compute_cfid, em_material_average, CfidInputs, CfidMode};
pub use compliance::{hygiene_compliance, ComplianceGroup, ComplianceThresholds, GroupBy};
pub use formula::{evaluate, parse_formula, Binding, Bindings, FormulaExpr};
pub use mcfi::{compute_mcfi, mcfi_from_aggregates, McfiAggregates, SurveyResponse};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndicatorError {
    #[error("no data in observation period")]
    NoData,
    #[error("invalid inputs: {0}")]
    InvalidInputs(String),
    #[error(transparent)]
    Eval(#[from] formula::EvalError),
    #[error(transparent)]
    Parse(#[from] formula::ParseError),
}

/// Names accepted as `builtin:<name>` in measurement formulas.
pub const BUILTINS: [&str; 4] = ["mcfi", "cfid", "em_material", "hygiene_compliance"];

pub fn is_builtin(formula: &str) -> bool {
    formula.strip_prefix("builtin:").is_some_and(|n| BUILTINS.contains(&n))
}

/// Label shown for values that fall into no band.
pub const UNCLASSIFIED: &str = "Unclassified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationPeriod {
    #[serde(with = "crate::time::serde_ms")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::time::serde_ms")]
    pub end: DateTime<Utc>,
}

/// A computed indicator with its classification and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValue {
    pub indicator_ref: String,
    pub value: f64,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_period: Option<ObservationPeriod>,
    /// `None` when the value falls into no band.
    pub band: Option<String>,
    /// Input references and intermediate quantities.
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
}

impl IndicatorValue {
    pub fn band_label(&self) -> &str {
        self.band.as_deref().unwrap_or(UNCLASSIFIED)
    }

    /// Value rounded for display: two places for MCFI, three otherwise.
    pub fn display_value(&self) -> String {
        let places = if self.indicator_ref == "MCFI" { 2 } else { 3 };
        format!("{:.*}", places, crate::summary::round_to(self.value, places as u32))
    }

    /// Re-derive the band from `bands`.
    pub fn classified(mut self, bands: &[ClassificationBand], policy: ClassifyPolicy) -> Self {
        self.band = classify(self.value, bands, policy);
        self
    }
}

//! Manual check-in fluency index from guest surveys.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bands::{classify, mcfi_bands, ClassifyPolicy};
use super::{IndicatorError, IndicatorValue, ObservationPeriod};

/// Formula over the three aggregate means.
pub const MCFI_FORMULA: &str = "(s_bar + (1 - f_bar) + p_bar) / 3";
/// Formula over raw survey series; needs `F_max > 0`.
pub const MCFI_SURVEY_FORMULA: &str = "(mean(norm(S, 10)) + (1 - mean(norm(F, F_max))) + mean(norm(P, 10))) / 3";

/// One guest survey: satisfaction `s` and perceived time `p` on 0..=10,
/// `f` frictions reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub case_id: String,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "F")]
    pub f: u32,
    #[serde(rename = "P")]
    pub p: f64,
}

impl SurveyResponse {
    fn check(&self) -> Result<(), IndicatorError> {
        let in_scale = |x: f64| (0.0..=10.0).contains(&x);
        if !in_scale(self.s) || !in_scale(self.p) {
            return Err(IndicatorError::InvalidInputs(format!("survey {}: S and P must lie in [0, 10]", self.case_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McfiAggregates {
    pub s_bar: f64,
    pub f_bar: f64,
    pub p_bar: f64,
    pub f_max: u32,
    pub n_surveys: usize,
}

impl McfiAggregates {
    /// Aggregates supplied directly as means.
    pub fn from_means(s_bar: f64, f_bar: f64, p_bar: f64) -> Result<Self, IndicatorError> {
        for (name, v) in [("s_bar", s_bar), ("f_bar", f_bar), ("p_bar", p_bar)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(IndicatorError::InvalidInputs(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { s_bar, f_bar, p_bar, f_max: 0, n_surveys: 0 })
    }

    pub fn from_surveys(surveys: &[SurveyResponse]) -> Result<Self, IndicatorError> {
        if surveys.is_empty() {
            return Err(IndicatorError::NoData);
        }
        for s in surveys {
            s.check()?;
        }
        let n = surveys.len() as f64;
        let f_max = surveys.iter().map(|s| s.f).max().unwrap_or(0);
        let f_bar = if f_max == 0 { 0.0 } else { surveys.iter().map(|s| f64::from(s.f) / f64::from(f_max)).sum::<f64>() / n };
        Ok(Self {
            s_bar: surveys.iter().map(|s| s.s / 10.0).sum::<f64>() / n,
            f_bar,
            p_bar: surveys.iter().map(|s| s.p / 10.0).sum::<f64>() / n,
            f_max,
            n_surveys: surveys.len(),
        })
    }
}

pub fn mcfi_from_aggregates(a: &McfiAggregates) -> f64 {
    (a.s_bar + (1.0 - a.f_bar) + a.p_bar) / 3.0
}

fn to_value(a: &McfiAggregates, period: Option<ObservationPeriod>) -> IndicatorValue {
    let value = mcfi_from_aggregates(a);
    IndicatorValue {
        indicator_ref: "MCFI".into(),
        value,
        unit: "index".into(),
        observation_period: period,
        band: classify(value, &mcfi_bands(), ClassifyPolicy::Strict),
        provenance: [
            ("s_bar", json!(a.s_bar)),
            ("f_bar", json!(a.f_bar)),
            ("p_bar", json!(a.p_bar)),
            ("f_max", json!(a.f_max)),
            ("n_surveys", json!(a.n_surveys)),
            ("formula", json!(MCFI_FORMULA)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect(),
    }
}

pub fn compute_mcfi(surveys: &[SurveyResponse], period: Option<ObservationPeriod>) -> Result<IndicatorValue, IndicatorError> {
    Ok(to_value(&McfiAggregates::from_surveys(surveys)?, period))
}

pub fn compute_mcfi_from_aggregates(a: &McfiAggregates, period: Option<ObservationPeriod>) -> IndicatorValue {
    to_value(a, period)
}

/// Read surveys from CSV with header `case_id,S,F,P`.
pub fn read_surveys_csv(text: &str) -> Result<Vec<SurveyResponse>, IndicatorError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    reader.deserialize().map(|r| r.map_err(|e: csv::Error| IndicatorError::InvalidInputs(e.to_string()))).collect()
}

//! Classification of indicator values into labelled ranges.

use serde::{Deserialize, Serialize};

/// Labelled value range. Missing bounds are open (-inf / +inf).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationBand {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default = "yes")]
    pub lower_inclusive: bool,
    #[serde(default = "yes")]
    pub upper_inclusive: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifyPolicy {
    /// Only a containing band counts; values in gaps are unclassified.
    #[default]
    Strict,
    /// Gap values snap to the band with the closest boundary, ties to the lower band.
    Nearest,
}

impl ClassificationBand {
    pub fn closed(label: &str, lower: f64, upper: f64) -> Self {
        Self { label: label.into(), lower: Some(lower), upper: Some(upper), lower_inclusive: true, upper_inclusive: true }
    }

    /// `value <= upper`
    pub fn at_most(label: &str, upper: f64) -> Self {
        Self { label: label.into(), lower: None, upper: Some(upper), lower_inclusive: true, upper_inclusive: true }
    }

    /// `value > lower`
    pub fn above(label: &str, lower: f64) -> Self {
        Self { label: label.into(), lower: Some(lower), upper: None, lower_inclusive: false, upper_inclusive: true }
    }

    fn lo(&self) -> f64 {
        self.lower.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    pub fn contains(&self, value: f64) -> bool {
        let lo_ok = match self.lower {
            None => true,
            Some(l) if self.lower_inclusive => value >= l,
            Some(l) => value > l,
        };
        let hi_ok = match self.upper {
            None => true,
            Some(u) if self.upper_inclusive => value <= u,
            Some(u) => value < u,
        };
        lo_ok && hi_ok
    }

    /// Distance from `value` to the nearest boundary of the band (0 inside).
    fn distance(&self, value: f64) -> f64 {
        if self.contains(value) {
            0.0
        } else if value <= self.lo() {
            self.lo() - value
        } else {
            value - self.hi()
        }
    }

    /// Structural problem with this band, if any.
    pub fn defect(&self) -> Option<&'static str> {
        if self.lower.is_some_and(f64::is_nan) || self.upper.is_some_and(f64::is_nan) {
            return Some("band bound is NaN");
        }
        let (lo, hi) = (self.lo(), self.hi());
        if lo > hi {
            return Some("band lower bound exceeds upper bound");
        }
        if lo == hi && !(self.lower_inclusive && self.upper_inclusive) {
            return Some("single-point band must be inclusive on both ends");
        }
        None
    }

    /// Whether two bands share at least one point.
    pub fn overlaps(&self, other: &ClassificationBand) -> bool {
        let (a, b) = if self.lo() <= other.lo() { (self, other) } else { (other, self) };
        if a.hi() > b.lo() {
            return true;
        }
        a.hi() == b.lo() && a.upper_inclusive && b.lower_inclusive && a.hi().is_finite()
    }
}

/// Label of the band containing `value`; gap values depend on `policy`.
pub fn classify(value: f64, bands: &[ClassificationBand], policy: ClassifyPolicy) -> Option<String> {
    if value.is_nan() {
        return None;
    }
    if let Some(band) = bands.iter().find(|b| b.contains(value)) {
        return Some(band.label.clone());
    }
    match policy {
        ClassifyPolicy::Strict => None,
        ClassifyPolicy::Nearest => bands
            .iter()
            .min_by(|a, b| a.distance(value).total_cmp(&b.distance(value)).then(a.lo().total_cmp(&b.lo())))
            .map(|b| b.label.clone()),
    }
}

pub const EXCELLENT: &str = "excellent";
pub const ACCEPTABLE: &str = "acceptable";
pub const MODERATE: &str = "moderate: requires review";
pub const POOR: &str = "poor: requires immediate action";

/// Check-in fluency bands; gaps between 0.25–0.26, 0.5–0.6 and 0.75–0.76 are kept.
pub fn mcfi_bands() -> Vec<ClassificationBand> {
    vec![
        ClassificationBand::at_most(POOR, 0.25),
        ClassificationBand::closed(MODERATE, 0.26, 0.5),
        ClassificationBand::closed(ACCEPTABLE, 0.6, 0.75),
        ClassificationBand::closed(EXCELLENT, 0.76, 1.0),
    ]
}

/// Per guest-day carbon footprint bands (kg CO2e).
pub fn cfid_bands() -> Vec<ClassificationBand> {
    vec![
        ClassificationBand::closed(EXCELLENT, 0.0, 2.2),
        ClassificationBand::closed(ACCEPTABLE, 2.21, 3.5),
        ClassificationBand::closed(MODERATE, 3.51, 6.0),
        ClassificationBand::above(POOR, 6.0),
    ]
}

/// Whether a band label calls for analyst review.
pub fn needs_review(label: Option<&str>) -> bool {
    match label {
        None => true,
        Some(l) => l.starts_with("moderate") || l.starts_with("poor"),
    }
}

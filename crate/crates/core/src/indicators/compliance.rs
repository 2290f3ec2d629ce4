//! Hand-hygiene compliance statistics over detected episodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sensors::{HygieneEpisode, QualityFlag};
use crate::summary::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceThresholds {
    /// Inclusive range of acceptable amounts in millilitres.
    pub amount_ml_range: [f64; 2],
    pub min_duration_s: f64,
}

impl Default for ComplianceThresholds {
    fn default() -> Self {
        Self { amount_ml_range: [3.0, 5.0], min_duration_s: 30.0 }
    }
}

impl ComplianceThresholds {
    pub fn amount_ok(&self, ml: f64) -> bool {
        ml >= self.amount_ml_range[0] && ml <= self.amount_ml_range[1]
    }

    pub fn duration_ok(&self, s: f64) -> bool {
        s >= self.min_duration_s
    }

    pub fn is_valid(&self) -> bool {
        self.amount_ml_range[0] < self.amount_ml_range[1] && self.min_duration_s >= 0.0
    }
}

/// Grouping key for compliance statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupBy {
    Case,
    Activity,
    /// Case id → scenario label, usually read from a trace attribute.
    Scenario(BTreeMap<String, String>),
}

/// Key used for episodes that lack the grouping attribute.
pub const UNASSIGNED: &str = "(unassigned)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceGroup {
    pub key: String,
    pub count: usize,
    /// Episodes flagged with a negative amount; excluded from amount statistics.
    pub negative_amount_count: usize,
    pub amount_ml: Option<Summary>,
    pub duration_s: Option<Summary>,
    /// `None` when every episode in the group was flagged.
    pub amount_compliant_fraction: Option<f64>,
    pub duration_compliant_fraction: f64,
}

pub fn hygiene_compliance(episodes: &[HygieneEpisode], thresholds: &ComplianceThresholds, group_by: &GroupBy) -> Vec<ComplianceGroup> {
    let mut groups: BTreeMap<String, Vec<&HygieneEpisode>> = BTreeMap::new();
    for e in episodes {
        let key = match group_by {
            GroupBy::Case => e.case_ref.clone(),
            GroupBy::Activity => e.activity_ref.clone(),
            GroupBy::Scenario(labels) => e.case_ref.as_ref().and_then(|c| labels.get(c)).cloned(),
        };
        groups.entry(key.unwrap_or_else(|| UNASSIGNED.to_string())).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let usable: Vec<f64> = members.iter().filter(|e| !e.has(QualityFlag::NegativeAmount)).map(|e| e.amount_ml).collect();
            let durations: Vec<f64> = members.iter().map(|e| e.duration_s).collect();
            let fraction = |hits: usize, n: usize| hits as f64 / n as f64;
            ComplianceGroup {
                count: members.len(),
                negative_amount_count: members.len() - usable.len(),
                amount_ml: Summary::of(&usable),
                duration_s: Summary::of(&durations),
                amount_compliant_fraction: (!usable.is_empty())
                    .then(|| fraction(usable.iter().filter(|&&ml| thresholds.amount_ok(ml)).count(), usable.len())),
                duration_compliant_fraction: fraction(durations.iter().filter(|&&d| thresholds.duration_ok(d)).count(), durations.len()),
                key,
            }
        })
        .collect()
}

//! Rule-based hygiene conformance.
//!
//! A hygiene instance only counts when both its start and complete events
//! were recorded. A position rule `before X` holds when a counted hygiene
//! completes before the first start of `X` and no other contact activity
//! starts in between. `after X` mirrors this around the last completion of
//! `X`. A response rule requires a counted hygiene between every trigger
//! event and the next activity of the named class.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{instances, EventLog, Instance, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum When {
    Before,
    After,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HygieneRule {
    Position { when: When, activity: String },
    Response { trigger: String, class: String },
}

fn default_hygiene() -> String {
    "Hand hygiene".to_string()
}

fn default_contact_class() -> String {
    "patient-contact".to_string()
}

/// Prescribed activity order plus hygiene rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormativeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub sequence: Vec<String>,
    #[serde(default = "default_hygiene")]
    pub hygiene_activity: String,
    /// Event classes that may occur outside the sequence, e.g. a contamination.
    #[serde(default)]
    pub external: BTreeSet<String>,
    /// Named activity classes.
    #[serde(default)]
    pub classes: BTreeMap<String, BTreeSet<String>>,
    /// Class whose members close the adjacency window of position rules.
    #[serde(default = "default_contact_class")]
    pub contact_class: String,
    #[serde(default)]
    pub rules: Vec<HygieneRule>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("rule references unknown activity {0:?}")]
    UnknownActivity(String),
    #[error("rule references unknown class {0:?}")]
    UnknownClass(String),
    #[error("invalid spec: {0}")]
    Syntax(String),
}

impl NormativeSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| SpecError::Syntax(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn is_known(&self, activity: &str) -> bool {
        activity == self.hygiene_activity || self.sequence.iter().any(|s| s == activity) || self.external.contains(activity)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for members in self.classes.values() {
            if let Some(m) = members.iter().find(|m| !self.is_known(m)) {
                return Err(SpecError::UnknownActivity(m.clone()));
            }
        }
        let has_position = self.rules.iter().any(|r| matches!(r, HygieneRule::Position { .. }));
        if has_position && !self.classes.contains_key(&self.contact_class) {
            return Err(SpecError::UnknownClass(self.contact_class.clone()));
        }
        for rule in &self.rules {
            let (activity, class) = match rule {
                HygieneRule::Position { activity, .. } => (activity, None),
                HygieneRule::Response { trigger, class } => (trigger, Some(class)),
            };
            if !self.is_known(activity) {
                return Err(SpecError::UnknownActivity(activity.clone()));
            }
            if let Some(c) = class.filter(|c| !self.classes.contains_key(*c)) {
                return Err(SpecError::UnknownClass(c.clone()));
            }
        }
        Ok(())
    }

    fn class(&self, name: &str) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.classes.get(name).unwrap_or(&EMPTY)
    }

    /// Position in `sequence` of the first occurrence of an activity.
    pub fn step_index(&self, activity: &str) -> Option<usize> {
        self.sequence.iter().position(|s| s == activity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeviationKind {
    MissingHygiene,
    OutOfOrder,
    UnknownActivity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub kind: DeviationKind,
    /// Index of the offending event in the trace.
    pub position: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseConformance {
    pub case_id: String,
    pub deviations: Vec<Deviation>,
}

impl CaseConformance {
    pub fn is_conforming(&self) -> bool {
        self.deviations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceResult {
    pub cases: Vec<CaseConformance>,
    pub conforming_cases: usize,
    pub total_cases: usize,
    /// 1.0 for an empty log.
    pub conforming_case_fraction: f64,
}

impl ConformanceResult {
    pub fn case(&self, case_id: &str) -> Option<&CaseConformance> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }

    pub fn deviation_count(&self) -> usize {
        self.cases.iter().map(|c| c.deviations.len()).sum()
    }
}

struct CaseView<'a> {
    spec: &'a NormativeSpec,
    inst: Vec<Instance>,
}

impl CaseView<'_> {
    fn hygiene_completions(&self) -> impl Iterator<Item = &Instance> {
        self.inst.iter().filter(|i| i.activity == self.spec.hygiene_activity && i.is_paired())
    }

    fn contact_starts_in(&self, skip: &Instance, lo: DateTime<Utc>, hi: DateTime<Utc>, lo_open: bool) -> bool {
        let contact = self.spec.class(&self.spec.contact_class);
        self.inst.iter().any(|i| {
            !std::ptr::eq(i, skip) && contact.contains(&i.activity) && (if lo_open { i.start > lo } else { i.start >= lo }) && i.start < hi
        })
    }

    fn check_before(&self, target: &Instance) -> bool {
        let latest = self.hygiene_completions().filter(|h| h.end <= target.start).map(|h| h.end).max();
        latest.is_some_and(|h| !self.contact_starts_in(target, h, target.start, false))
    }

    fn check_after(&self, target: &Instance) -> bool {
        let earliest = self.hygiene_completions().filter(|h| h.start >= target.end).map(|h| h.start).min();
        earliest.is_some_and(|h| !self.contact_starts_in(target, target.end, h, true))
    }

    fn check_response(&self, trigger: &Instance, class: &BTreeSet<String>) -> bool {
        let next = self.inst.iter().filter(|i| class.contains(&i.activity) && i.start >= trigger.end).map(|i| i.start).min();
        match next {
            None => true,
            Some(limit) => self.hygiene_completions().any(|h| h.start >= trigger.end && h.end <= limit),
        }
    }
}

fn check_case(trace: &Trace, spec: &NormativeSpec) -> CaseConformance {
    let view = CaseView { spec, inst: instances(trace) };
    let mut deviations = Vec::new();

    let mut highest: Option<(usize, &str)> = None;
    for inst in &view.inst {
        if inst.activity == spec.hygiene_activity || spec.external.contains(&inst.activity) {
            continue;
        }
        match spec.step_index(&inst.activity) {
            None => deviations.push(Deviation {
                kind: DeviationKind::UnknownActivity,
                position: inst.first_index(),
                detail: format!("activity {:?} is not part of the sequence", inst.activity),
            }),
            Some(idx) => match highest {
                Some((h, prev)) if idx < h => deviations.push(Deviation {
                    kind: DeviationKind::OutOfOrder,
                    position: inst.first_index(),
                    detail: format!("{:?} occurs after {:?}", inst.activity, prev),
                }),
                _ => highest = Some((idx, &spec.sequence[idx])),
            },
        }
    }

    for rule in &spec.rules {
        match rule {
            HygieneRule::Position { when, activity } => {
                let occurrences = view.inst.iter().filter(|i| &i.activity == activity);
                let target = match when {
                    When::Before => occurrences.min_by_key(|i| (i.start, i.first_index())),
                    When::After => occurrences.max_by_key(|i| (i.end, i.first_index())),
                };
                let Some(target) = target else { continue };
                let ok = match when {
                    When::Before => view.check_before(target),
                    When::After => view.check_after(target),
                };
                if !ok {
                    let (position, word) = match when {
                        When::Before => (target.first_index(), "before"),
                        When::After => (target.complete_index.unwrap_or(target.first_index()), "after"),
                    };
                    deviations.push(Deviation {
                        kind: DeviationKind::MissingHygiene,
                        position,
                        detail: format!("no {} {word} {:?}", spec.hygiene_activity, activity),
                    });
                }
            }
            HygieneRule::Response { trigger, class } => {
                let members = spec.class(class);
                for t in view.inst.iter().filter(|i| &i.activity == trigger) {
                    if !view.check_response(t, members) {
                        deviations.push(Deviation {
                            kind: DeviationKind::MissingHygiene,
                            position: t.first_index(),
                            detail: format!("no {} after {:?} before next {class} activity", spec.hygiene_activity, trigger),
                        });
                    }
                }
            }
        }
    }
    deviations.sort_by_key(|d| (d.position, d.kind));
    CaseConformance { case_id: trace.case_id.clone(), deviations }
}

pub fn conformance_check(log: &EventLog, spec: &NormativeSpec) -> Result<ConformanceResult, SpecError> {
    spec.validate()?;
    let mut cases: Vec<CaseConformance> = log.traces.iter().map(|t| check_case(t, spec)).collect();
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    let total_cases = cases.len();
    let conforming_cases = cases.iter().filter(|c| c.is_conforming()).count();
    let conforming_case_fraction = if total_cases == 0 { 1.0 } else { conforming_cases as f64 / total_cases as f64 };
    Ok(ConformanceResult { cases, conforming_cases, total_cases, conforming_case_fraction })
}

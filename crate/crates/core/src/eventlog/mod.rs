//! Process event logs: XES reading and writing, activity statistics,
//! hygiene conformance and fusion with sensor-derived episodes.

pub mod conformance;
pub mod fusion;
pub mod stats;
pub mod xes;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use conformance::{conformance_check, ConformanceResult, Deviation, DeviationKind, NormativeSpec, SpecError};
pub use stats::{activity_stats, all_activity_stats, directly_follows, ActivityStats};
pub use xes::{parse_xes, write_xes, XesError};

pub const CONCEPT_NAME: &str = "concept:name";
pub const TIME_TIMESTAMP: &str = "time:timestamp";
pub const LIFECYCLE_TRANSITION: &str = "lifecycle:transition";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lifecycle {
    Start,
    #[default]
    Complete,
}

impl Lifecycle {
    pub fn as_str(self) -> &'static str {
        match self {
            Lifecycle::Start => "start",
            Lifecycle::Complete => "complete",
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "start" => Some(Lifecycle::Start),
            "complete" => Some(Lifecycle::Complete),
            _ => None,
        }
    }
}

/// Typed XES attribute value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum AttributeValue {
    String(String),
    Int(i64),
    Float(f64),
    Boolean(bool),
    #[serde(with = "crate::time::serde_ms")]
    Date(DateTime<Utc>),
    Id(String),
}

impl AttributeValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            AttributeValue::String(s) | AttributeValue::Id(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for AttributeValue {
    fn from(s: &str) -> Self {
        AttributeValue::String(s.to_string())
    }
}

impl From<f64> for AttributeValue {
    fn from(x: f64) -> Self {
        AttributeValue::Float(x)
    }
}

pub type Attributes = BTreeMap<String, AttributeValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub activity: String,
    #[serde(with = "crate::time::serde_ms")]
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub lifecycle: Lifecycle,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
}

impl Event {
    pub fn new(activity: &str, timestamp: DateTime<Utc>, lifecycle: Lifecycle) -> Self {
        Self { activity: activity.to_string(), timestamp, lifecycle, attributes: Attributes::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: &str) -> Self {
        Self { case_id: case_id.to_string(), ..Default::default() }
    }

    /// Stable sort by timestamp.
    pub fn sort_events(&mut self) {
        self.events.sort_by_key(|e| e.timestamp);
    }

    pub fn attribute_str(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).and_then(AttributeValue::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventLog {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: Attributes,
    pub traces: Vec<Trace>,
}

impl EventLog {
    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    /// Case id → value of a string trace attribute, for traces that carry it.
    pub fn case_labels(&self, key: &str) -> BTreeMap<String, String> {
        self.traces.iter().filter_map(|t| t.attribute_str(key).map(|v| (t.case_id.clone(), v.to_string()))).collect()
    }
}

/// One execution of an activity, rebuilt from its lifecycle events.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub activity: String,
    /// Index of the start event, when one was recorded.
    pub start_index: Option<usize>,
    pub complete_index: Option<usize>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Instance {
    pub fn is_paired(&self) -> bool {
        self.start_index.is_some() && self.complete_index.is_some()
    }

    /// Position of the first event of the instance.
    pub fn first_index(&self) -> usize {
        self.start_index.or(self.complete_index).unwrap_or(0)
    }

    pub fn duration_ms(&self) -> i64 {
        (self.end - self.start).num_milliseconds()
    }
}

/// Pair start and complete events FIFO per activity.
///
/// Unmatched starts and completes become unpaired instances. The result is
/// ordered by the position of each instance's first event.
pub fn instances(trace: &Trace) -> Vec<Instance> {
    let mut open: BTreeMap<&str, std::collections::VecDeque<usize>> = BTreeMap::new();
    let mut out: Vec<Instance> = Vec::new();
    for (i, e) in trace.events.iter().enumerate() {
        match e.lifecycle {
            Lifecycle::Start => {
                open.entry(&e.activity).or_default().push_back(out.len());
                out.push(Instance {
                    activity: e.activity.clone(),
                    start_index: Some(i),
                    complete_index: None,
                    start: e.timestamp,
                    end: e.timestamp,
                });
            }
            Lifecycle::Complete => match open.get_mut(e.activity.as_str()).and_then(|q| q.pop_front()) {
                Some(k) => {
                    out[k].complete_index = Some(i);
                    out[k].end = e.timestamp;
                }
                None => out.push(Instance {
                    activity: e.activity.clone(),
                    start_index: None,
                    complete_index: Some(i),
                    start: e.timestamp,
                    end: e.timestamp,
                }),
            },
        }
    }
    out
}

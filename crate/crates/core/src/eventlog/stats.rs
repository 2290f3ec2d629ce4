//! Per-activity duration statistics and directly-follows counts.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{instances, EventLog, Lifecycle};
use crate::summary::{round_to, Summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStats {
    pub activity: String,
    /// Paired start/complete instances.
    pub instance_count: usize,
    /// Seconds, 3 decimals. `None` when no instance was paired.
    pub durations: Option<Summary>,
    pub per_case_counts: BTreeMap<String, usize>,
    pub unpaired_starts: usize,
    pub unpaired_completes: usize,
}

fn seconds(summary_ms: Summary) -> Summary {
    let s = |ms: f64| round_to(ms / 1000.0, 3);
    Summary { min: s(summary_ms.min), max: s(summary_ms.max), mean: s(summary_ms.mean), median: s(summary_ms.median) }
}

pub fn activity_stats(log: &EventLog, activity: &str) -> ActivityStats {
    let mut durations_ms = Vec::new();
    let mut per_case_counts = BTreeMap::new();
    let (mut unpaired_starts, mut unpaired_completes) = (0, 0);
    for trace in &log.traces {
        for inst in instances(trace).into_iter().filter(|i| i.activity == activity) {
            match (inst.start_index, inst.complete_index) {
                (Some(_), Some(_)) => {
                    durations_ms.push(inst.duration_ms() as f64);
                    *per_case_counts.entry(trace.case_id.clone()).or_insert(0) += 1;
                }
                (Some(_), None) => unpaired_starts += 1,
                _ => unpaired_completes += 1,
            }
        }
    }
    ActivityStats {
        activity: activity.to_string(),
        instance_count: durations_ms.len(),
        durations: Summary::of(&durations_ms).map(seconds),
        per_case_counts,
        unpaired_starts,
        unpaired_completes,
    }
}

/// Statistics for every activity in the log, sorted by name.
pub fn all_activity_stats(log: &EventLog) -> Vec<ActivityStats> {
    let names: BTreeSet<&str> = log.traces.iter().flat_map(|t| t.events.iter().map(|e| e.activity.as_str())).collect();
    names.into_iter().map(|a| activity_stats(log, a)).collect()
}

pub const STATS_CSV_HEADER: [&str; 6] = ["activity", "count", "min_s", "max_s", "mean_s", "median_s"];

pub fn stats_csv(stats: &[ActivityStats]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATS_CSV_HEADER).expect("in-memory write");
    for s in stats {
        let field = |f: fn(&Summary) -> f64| s.durations.as_ref().map(|d| format!("{:.3}", f(d))).unwrap_or_default();
        w.write_record([
            s.activity.clone(),
            s.instance_count.to_string(),
            field(|d| d.min),
            field(|d| d.max),
            field(|d| d.mean),
            field(|d| d.median),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is UTF-8")
}

/// Directly-follows edge between two activities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FollowsEdge {
    pub from: String,
    pub to: String,
    pub count: usize,
}

/// Counts of one activity instance being directly followed by another.
///
/// Instances are ordered by their first event, so a start/complete pair
/// counts once.
pub fn directly_follows(log: &EventLog) -> Vec<FollowsEdge> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for trace in &log.traces {
        let seq = instances(trace);
        for pair in seq.windows(2) {
            *counts.entry((pair[0].activity.clone(), pair[1].activity.clone())).or_insert(0) += 1;
        }
    }
    counts.into_iter().map(|((from, to), count)| FollowsEdge { from, to, count }).collect()
}

pub fn follows_csv(edges: &[FollowsEdge]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["from", "to", "count"]).expect("in-memory write");
    for e in edges {
        w.write_record([e.from.as_str(), e.to.as_str(), &e.count.to_string()]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is UTF-8")
}

/// Number of start and complete events per activity, ignoring pairing.
pub fn lifecycle_counts(log: &EventLog) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in log.traces.iter().flat_map(|t| &t.events) {
        let slot = out.entry(e.activity.clone()).or_default();
        match e.lifecycle {
            Lifecycle::Start => slot.0 += 1,
            Lifecycle::Complete => slot.1 += 1,
        }
    }
    out
}

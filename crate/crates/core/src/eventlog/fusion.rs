//! Merging manually recorded hygiene events with sensor-detected episodes.

use serde::{Deserialize, Serialize};

use super::{instances, AttributeValue, Event, EventLog, Lifecycle, Trace};
use crate::sensors::HygieneEpisode;

pub const SOURCE_KEY: &str = "source";

/// Which timestamps win when a manual hygiene instance and an episode match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precedence {
    #[default]
    Manual,
    Iot,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FusionStats {
    pub matched: usize,
    pub manual_only: usize,
    pub iot_only: usize,
    /// Episodes that could not be placed in any trace.
    pub unplaced: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub log: EventLog,
    pub stats: FusionStats,
}

fn overlap_ms(a: (i64, i64), b: (i64, i64)) -> i64 {
    a.1.min(b.1) - a.0.max(b.0)
}

fn episode_attributes(ep: &HygieneEpisode, event: &mut Event) {
    event.attributes.insert("amount_g".into(), AttributeValue::Float(ep.amount_g));
    event.attributes.insert("amount_ml".into(), AttributeValue::Float(ep.amount_ml));
    for flag in &ep.quality {
        event.attributes.insert(format!("quality:{flag:?}"), AttributeValue::Boolean(true));
    }
}

fn trace_for(log: &EventLog, ep: &HygieneEpisode) -> Option<usize> {
    if let Some(case) = &ep.case_ref {
        return log.traces.iter().position(|t| &t.case_id == case);
    }
    log.traces.iter().position(|t| match (t.events.first(), t.events.last()) {
        (Some(first), Some(last)) => first.timestamp <= ep.start && ep.start <= last.timestamp,
        _ => false,
    })
}

/// Merge episodes into the hygiene events of a manual log.
///
/// Episodes are assigned to traces by `case_ref`, or by time span when the
/// reference is missing. Within a trace, each episode matches the manual
/// hygiene instance it overlaps most. Every hygiene event of the result
/// carries a `source` attribute: `manual`, `iot` or `both`.
pub fn fuse_hygiene(manual: &EventLog, episodes: &[HygieneEpisode], hygiene_activity: &str, precedence: Precedence) -> FusionResult {
    let mut log = manual.clone();
    let mut stats = FusionStats::default();
    let mut per_trace: Vec<Vec<&HygieneEpisode>> = vec![Vec::new(); log.traces.len()];
    for ep in episodes {
        match trace_for(&log, ep) {
            Some(i) => per_trace[i].push(ep),
            None => stats.unplaced += 1,
        }
    }

    for (trace, eps) in log.traces.iter_mut().zip(per_trace) {
        let hygiene: Vec<_> = instances(trace).into_iter().filter(|i| i.activity == hygiene_activity).collect();
        let mut taken = vec![false; hygiene.len()];
        let mut appended = Vec::new();
        for e in trace.events.iter_mut().filter(|e| e.activity == hygiene_activity) {
            e.attributes.insert(SOURCE_KEY.into(), "manual".into());
        }
        for ep in eps {
            let span = (ep.start.timestamp_millis(), ep.end.timestamp_millis());
            let best = hygiene
                .iter()
                .enumerate()
                .filter(|(k, _)| !taken[*k])
                .map(|(k, h)| (k, overlap_ms(span, (h.start.timestamp_millis(), h.end.timestamp_millis()))))
                .filter(|(_, o)| *o >= 0)
                .max_by_key(|(k, o)| (*o, std::cmp::Reverse(*k)));
            match best {
                Some((k, _)) => {
                    taken[k] = true;
                    stats.matched += 1;
                    let h = &hygiene[k];
                    for (idx, lifecycle) in [(h.start_index, Lifecycle::Start), (h.complete_index, Lifecycle::Complete)] {
                        let Some(idx) = idx else { continue };
                        let ev = &mut trace.events[idx];
                        ev.attributes.insert(SOURCE_KEY.into(), "both".into());
                        episode_attributes(ep, ev);
                        if precedence == Precedence::Iot {
                            ev.timestamp = if lifecycle == Lifecycle::Start { ep.start } else { ep.end };
                        }
                    }
                }
                None => {
                    stats.iot_only += 1;
                    for (t, lifecycle) in [(ep.start, Lifecycle::Start), (ep.end, Lifecycle::Complete)] {
                        let mut ev = Event::new(hygiene_activity, t, lifecycle);
                        ev.attributes.insert(SOURCE_KEY.into(), "iot".into());
                        episode_attributes(ep, &mut ev);
                        appended.push(ev);
                    }
                }
            }
        }
        stats.manual_only += taken.iter().filter(|t| !**t).count();
        trace.events.extend(appended);
        trace.sort_events();
    }
    FusionResult { log, stats }
}

/// A log holding one trace per case, built from episodes alone.
pub fn episodes_to_log(episodes: &[HygieneEpisode], default_case: &str, hygiene_activity: &str) -> EventLog {
    let mut log = EventLog::default();
    for ep in episodes {
        let case = ep.case_ref.as_deref().unwrap_or(default_case);
        let idx = match log.traces.iter().position(|t| t.case_id == case) {
            Some(i) => i,
            None => {
                log.traces.push(Trace::new(case));
                log.traces.len() - 1
            }
        };
        let activity = ep.activity_ref.as_deref().unwrap_or(hygiene_activity);
        for (t, lifecycle) in [(ep.start, Lifecycle::Start), (ep.end, Lifecycle::Complete)] {
            let mut ev = Event::new(activity, t, lifecycle);
            ev.attributes.insert(SOURCE_KEY.into(), "iot".into());
            episode_attributes(ep, &mut ev);
            log.traces[idx].events.push(ev);
        }
    }
    for t in &mut log.traces {
        t.sort_events();
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::from_millis;
    use std::collections::BTreeSet;

    fn episode(case: Option<&str>, start_s: i64, end_s: i64) -> HygieneEpisode {
        HygieneEpisode {
            case_ref: case.map(str::to_string),
            activity_ref: None,
            start: from_millis(start_s * 1000),
            end: from_millis(end_s * 1000),
            duration_s: (end_s - start_s) as f64,
            amount_g: 3.0,
            amount_ml: 3.0 / 0.85,
            before_g: 500.0,
            after_g: 497.0,
            quality: BTreeSet::new(),
        }
    }

    fn manual() -> EventLog {
        let mut t = Trace::new("c1");
        t.events = vec![
            Event::new("Hand hygiene", from_millis(10_000), Lifecycle::Start),
            Event::new("Hand hygiene", from_millis(30_000), Lifecycle::Complete),
            Event::new("Draw blood", from_millis(60_000), Lifecycle::Complete),
        ];
        EventLog { traces: vec![t], ..Default::default() }
    }

    #[test]
    fn precedence_picks_timestamps() {
        let eps = [episode(Some("c1"), 12, 34), episode(None, 40, 50)];
        let manual_first = fuse_hygiene(&manual(), &eps, "Hand hygiene", Precedence::Manual);
        assert_eq!(manual_first.stats, FusionStats { matched: 1, manual_only: 0, iot_only: 1, unplaced: 0 });
        let t = &manual_first.log.traces[0];
        assert_eq!(t.events[0].timestamp, from_millis(10_000));
        assert_eq!(t.events[0].attributes[SOURCE_KEY], AttributeValue::from("both"));
        assert_eq!(t.events.len(), 5);

        let iot_first = fuse_hygiene(&manual(), &eps[..1], "Hand hygiene", Precedence::Iot);
        let t = &iot_first.log.traces[0];
        assert_eq!(t.events[0].timestamp, from_millis(12_000));
        assert_eq!(t.events[1].timestamp, from_millis(34_000));
    }

    #[test]
    fn unmatched_sources_are_counted() {
        let r = fuse_hygiene(&manual(), &[episode(Some("zz"), 1, 2)], "Hand hygiene", Precedence::Manual);
        assert_eq!(r.stats, FusionStats { matched: 0, manual_only: 1, iot_only: 0, unplaced: 1 });
    }

    #[test]
    fn episodes_become_traces() {
        let log = episodes_to_log(&[episode(Some("b"), 5, 9), episode(None, 1, 3)], "session", "Hand hygiene");
        assert_eq!(log.traces.len(), 2);
        assert_eq!(log.traces[0].case_id, "b");
        assert_eq!(log.event_count(), 4);
    }
}

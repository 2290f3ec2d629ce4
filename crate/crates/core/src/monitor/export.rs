//! Episode export at the end of a session.

use crate::eventlog::fusion::episodes_to_log;
use crate::eventlog::write_xes;
use crate::sensors::HygieneEpisode;
use crate::time::format_instant;

pub const EPISODES_CSV_HEADER: [&str; 10] =
    ["case_ref", "activity_ref", "start", "end", "duration_s", "amount_g", "amount_ml", "before_g", "after_g", "quality"];

pub fn episodes_csv(episodes: &[HygieneEpisode]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPISODES_CSV_HEADER).expect("in-memory write");
    for ep in episodes {
        let quality: Vec<String> = ep.quality.iter().map(|q| format!("{q:?}")).collect();
        w.write_record([
            ep.case_ref.clone().unwrap_or_default(),
            ep.activity_ref.clone().unwrap_or_default(),
            format_instant(&ep.start),
            format_instant(&ep.end),
            format!("{:.3}", ep.duration_s),
            format!("{:.3}", ep.amount_g),
            format!("{:.3}", ep.amount_ml),
            format!("{:.3}", ep.before_g),
            format!("{:.3}", ep.after_g),
            quality.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Episodes as an XES log with one hygiene instance per episode.
pub fn episodes_xes(episodes: &[HygieneEpisode], default_case: &str, hygiene_activity: &str) -> String {
    write_xes(&episodes_to_log(episodes, default_case, hygiene_activity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{instances, parse_xes};
    use crate::simulate::{ScenarioScript, ScriptedEpisode};

    fn episodes() -> Vec<HygieneEpisode> {
        let sc = ScenarioScript {
            episodes: vec![ScriptedEpisode::new(20.0, 30.0, 4.0), ScriptedEpisode::new(90.0, 20.0, 2.0)],
            ..Default::default()
        };
        let sim = sc.generate().unwrap();
        crate::sensors::detect::detect_hygiene_episodes(&sim.scale_series(), &sim.distance_series(), &sim.truth.params).unwrap()
    }

    #[test]
    fn csv_has_one_row_per_episode() {
        let text = episodes_csv(&episodes());
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], EPISODES_CSV_HEADER.join(","));
        assert!(rows[1].contains(",30.000,4.000,"), "{}", rows[1]);
    }

    #[test]
    fn xes_round_trips_to_instances() {
        let eps = episodes();
        let log = parse_xes(&episodes_xes(&eps, "session", "Hand hygiene")).unwrap();
        let inst = instances(&log.traces[0]);
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].start, eps[0].start);
        assert_eq!(inst[1].end, eps[1].end);
    }
}

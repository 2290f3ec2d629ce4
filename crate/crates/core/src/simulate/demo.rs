//! Seeded generator for the bundled blood-donation demo log.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eventlog::{AttributeValue, Event, EventLog, Lifecycle, NormativeSpec, Trace};

pub const DEMO_SEED: u64 = 2024;
pub const DEMO_CASES: usize = 17;
pub const SCENARIO_KEY: &str = "scenario";
pub const CONTAMINATION: &str = "Contamination";

fn perform(rng: &mut ChaCha8Rng, trace: &mut Trace, clock: &mut DateTime<Utc>, name: &str, hygiene: bool) {
    let secs: i64 = if hygiene { rng.random_range(12..=28) } else { rng.random_range(15..=90) };
    let ms = secs * 1000 + rng.random_range(0..1000);
    trace.events.push(Event::new(name, *clock, Lifecycle::Start));
    *clock += Duration::milliseconds(ms);
    trace.events.push(Event::new(name, *clock, Lifecycle::Complete));
    *clock += Duration::milliseconds(rng.random_range(2_000..8_000));
}

/// A compliant log: every case follows the sequence of `spec` and performs
/// each hygiene step. Every third case records a contamination right after
/// the first contact activity, answered by an extra hygiene.
pub fn demo_log(spec: &NormativeSpec, cases: usize, seed: u64) -> EventLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let day: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 6, 10, 8, 0, 0).single().expect("valid date");
    let contact = spec.classes.get(&spec.contact_class);
    let mut log = EventLog::default();
    log.attributes.insert("concept:name".into(), AttributeValue::from("blood-donation training"));
    for c in 0..cases {
        let disturbed = c % 3 == 2;
        let mut trace = Trace::new(&format!("case-{:02}", c + 1));
        trace.attributes.insert(SCENARIO_KEY.into(), AttributeValue::from(if disturbed { "disturbance" } else { "basic" }));
        trace.attributes.insert("org:resource".into(), AttributeValue::from(format!("student-{:02}", c + 1).as_str()));
        let mut clock = day + Duration::minutes(20 * c as i64);
        let mut disturbance_pending = disturbed;
        for step in &spec.sequence {
            let hygiene = *step == spec.hygiene_activity;
            perform(&mut rng, &mut trace, &mut clock, step, hygiene);
            if disturbance_pending && contact.is_some_and(|m| m.contains(step)) {
                disturbance_pending = false;
                trace.events.push(Event::new(CONTAMINATION, clock, Lifecycle::Complete));
                clock += Duration::milliseconds(3_000);
                perform(&mut rng, &mut trace, &mut clock, &spec.hygiene_activity, true);
            }
        }
        log.traces.push(trace);
    }
    log
}

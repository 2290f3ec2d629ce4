//! Paced replay of a recorded feed.

use std::io::BufRead;
use std::time::{Duration, Instant};

use super::{parse_feed_line, LiveSession};
use crate::time::Millis;

/// Maps data time to wall time at a fixed speed-up.
#[derive(Debug, Clone)]
pub struct Pacer {
    speed: f64,
    origin: Option<(Instant, Millis)>,
}

impl Pacer {
    /// `speed` of 2.0 replays twice as fast as recorded; infinity never sleeps.
    pub fn new(speed: f64) -> Self {
        Self { speed, origin: None }
    }

    /// How long to wait before data time `t` is due.
    pub fn delay(&mut self, t: Millis) -> Duration {
        if !self.speed.is_finite() {
            return Duration::ZERO;
        }
        let now = Instant::now();
        let (wall0, t0) = *self.origin.get_or_insert((now, t));
        let due = wall0 + Duration::from_secs_f64(((t - t0).max(0) as f64 / 1000.0) / self.speed);
        due.saturating_duration_since(now)
    }

    /// Sleep until `t` is due; short waits are skipped.
    pub fn wait(&mut self, t: Millis) {
        let d = self.delay(t);
        if d > Duration::from_millis(1) {
            std::thread::sleep(d);
        }
    }
}

/// Replay `reader` line by line into a session. `apply` receives each line
/// after its due time and is responsible for applying it; this lets callers
/// hold a lock only while applying. Returns the number of lines read.
pub fn replay<R, F>(reader: R, speed: f64, mut apply: F) -> std::io::Result<u64>
where
    R: BufRead,
    F: FnMut(ReplayLine<'_>),
{
    let registry = crate::sensors::SchemaRegistry::bundled();
    replay_with(reader, speed, &registry, &mut apply)
}

/// A line ready to apply.
pub struct ReplayLine<'a> {
    pub number: u64,
    pub text: &'a str,
    pub parsed: Result<super::FeedItem, super::MonitorError>,
}

impl ReplayLine<'_> {
    pub fn apply_to(self, session: &mut LiveSession) {
        session.apply_parsed(self.parsed);
    }
}

pub fn replay_with<R, F>(reader: R, speed: f64, registry: &crate::sensors::SchemaRegistry, apply: &mut F) -> std::io::Result<u64>
where
    R: BufRead,
    F: FnMut(ReplayLine<'_>),
{
    let mut pacer = Pacer::new(speed);
    let mut n = 0;
    for line in reader.lines() {
        let line = line?;
        n += 1;
        let parsed =
            if line.trim().is_empty() { Ok(super::FeedItem::Readings(Vec::new())) } else { parse_feed_line(&line, n as usize, registry) };
        if let Ok(Some(t)) = parsed.as_ref().map(|i| i.time()) {
            pacer.wait(t);
        }
        apply(ReplayLine { number: n, text: &line, parsed });
    }
    Ok(n)
}

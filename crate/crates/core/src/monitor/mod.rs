//! Live state of an ongoing procedure, fed one reading at a time.
//!
//! A [`LiveSession`] runs the online episode detector on scale and distance
//! readings, tracks the current step of the normative sequence from button
//! presses and feed events, and keeps the sanitizer fill level. Every
//! applied line bumps the snapshot sequence number.

pub mod export;
pub mod replay;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bundled;
use crate::eventlog::NormativeSpec;
use crate::indicators::compliance::ComplianceThresholds;
use crate::sensors::ingest::{parse_json_line, to_reading};
use crate::sensors::{DetectionParams, DeviceKind, HygieneEpisode, OnlineDetector, Reading, SampleValue, SchemaRegistry, SensorError};
use crate::time::{self, Millis};

pub use export::{episodes_csv, episodes_xes};
pub use replay::{replay, replay_with, Pacer, ReplayLine};

pub const SNAPSHOT_SCHEMA: &str = "susbp.live/1";
/// Smallest settled baseline rise treated as a refill.
pub const REFILL_JUMP_G: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum MonitorError {
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("reading at {at} is older than the last applied reading")]
    OutOfOrder { at: String },
}

fn default_normative() -> NormativeSpec {
    NormativeSpec::from_json(bundled::PHLEBOTOMY_SPEC).expect("bundled spec is valid")
}

fn default_capacity() -> f64 {
    500.0
}

fn default_speed() -> f64 {
    1.0
}

fn default_session() -> String {
    "session-1".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_session")]
    pub session_id: String,
    #[serde(default = "default_normative")]
    pub normative: NormativeSpec,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub thresholds: ComplianceThresholds,
    #[serde(default = "default_capacity")]
    pub bottle_capacity_g: f64,
    #[serde(default = "default_speed")]
    pub replay_speed: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl SessionConfig {
    pub fn from_json(text: &str) -> Result<Self, MonitorError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| MonitorError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MonitorError> {
        let bad = |m: &str| Err(MonitorError::InvalidConfig(m.to_string()));
        if !(self.bottle_capacity_g > 0.0) {
            return bad("bottle_capacity_g must be positive");
        }
        if !(self.replay_speed > 0.0) {
            return bad("replay_speed must be positive");
        }
        if !self.thresholds.is_valid() {
            return bad("invalid compliance thresholds");
        }
        self.detection.validate()?;
        self.normative.validate().map_err(|e| MonitorError::InvalidConfig(e.to_string()))
    }
}

/// Non-reading records on the feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FeedEvent {
    StepComplete {
        step: String,
        #[serde(with = "crate::time::serde_ms")]
        timestamp: DateTime<Utc>,
    },
    /// Bottle refilled; without an amount the bottle counts as full.
    Refill {
        #[serde(with = "crate::time::serde_ms")]
        timestamp: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amount_g: Option<f64>,
    },
    /// A new case begins; steps restart and later episodes carry its id.
    CaseStart {
        case_id: String,
        #[serde(with = "crate::time::serde_ms")]
        timestamp: DateTime<Utc>,
    },
}

impl FeedEvent {
    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            FeedEvent::StepComplete { timestamp, .. } | FeedEvent::Refill { timestamp, .. } | FeedEvent::CaseStart { timestamp, .. } => {
                *timestamp
            }
        }
    }
}

/// One parsed feed line.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedItem {
    /// A wide smart plug row yields several readings.
    Readings(Vec<Reading>),
    Event(FeedEvent),
}

impl FeedItem {
    pub fn time(&self) -> Option<Millis> {
        match self {
            FeedItem::Readings(rs) => rs.iter().map(Reading::millis).max(),
            FeedItem::Event(e) => Some(time::to_millis(&e.timestamp())),
        }
    }
}

/// Parse one line of the feed protocol. Readings are checked against the
/// schema resolved for their device.
pub fn parse_feed_line(text: &str, line: usize, registry: &SchemaRegistry) -> Result<FeedItem, MonitorError> {
    let parse_err = |detail: String| MonitorError::Parse { line, detail };
    if text.contains("\"event\"") {
        let value: Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if value.get("event").is_some() {
            return serde_json::from_value(value).map(FeedItem::Event).map_err(|e| parse_err(e.to_string()));
        }
    }
    let mut readings = Vec::new();
    for raw in parse_json_line(text, line)? {
        let schema = registry.resolve(&raw.device_id)?;
        readings.push(to_reading(&raw, schema)?);
    }
    Ok(FeedItem::Readings(readings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentStep {
    /// Index into the normative sequence; equals its length once all steps are done.
    pub index: usize,
    pub name: Option<String>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub min_duration_s: f64,
    pub amount_ml_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillRecord {
    #[serde(with = "crate::time::serde_ms")]
    pub timestamp: DateTime<Utc>,
    pub amount_g: f64,
    pub declared: bool,
}

/// Wire form of the live state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema: String,
    pub seq: u64,
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    pub current_step: CurrentStep,
    pub steps: Vec<String>,
    pub episode_active: bool,
    pub running_duration_s: f64,
    pub running_amount_g: f64,
    pub fill_level_fraction: f64,
    pub density_g_per_ml: f64,
    pub completed_episodes: Vec<HygieneEpisode>,
    pub refills: Vec<RefillRecord>,
    pub targets: Targets,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_ms")]
    pub last_update: Option<DateTime<Utc>>,
}

mod opt_ms {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(t) => s.serialize_str(&crate::time::format_instant(t)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DateTime<Utc>>, D::Error> {
        match Option::<String>::deserialize(d)? {
            None => Ok(None),
            Some(raw) => {
                crate::time::parse_instant(&raw).map(Some).ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {raw:?}")))
            }
        }
    }
}

/// Counters for the feed, reported on the health endpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeedStats {
    pub lines: u64,
    pub readings: u64,
    pub events: u64,
    pub errors: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

pub struct LiveSession {
    config: SessionConfig,
    registry: SchemaRegistry,
    detector: OnlineDetector,
    seq: u64,
    stats: FeedStats,
    step_index: usize,
    case_id: Option<String>,
    completed: Vec<HygieneEpisode>,
    refills: Vec<RefillRecord>,
    content_g: f64,
    /// Settled level against which idle refills are measured.
    reference_g: Option<f64>,
    last_declared_refill: Option<Millis>,
    pending_refill: Option<Millis>,
    last_time: Option<Millis>,
}

impl LiveSession {
    pub fn new(config: SessionConfig) -> Result<Self, MonitorError> {
        Self::with_registry(config, SchemaRegistry::bundled())
    }

    pub fn with_registry(config: SessionConfig, registry: SchemaRegistry) -> Result<Self, MonitorError> {
        config.validate()?;
        Ok(Self {
            detector: OnlineDetector::new(config.detection),
            content_g: config.bottle_capacity_g,
            config,
            registry,
            seq: 0,
            stats: FeedStats::default(),
            step_index: 0,
            case_id: None,
            completed: Vec::new(),
            refills: Vec::new(),
            reference_g: None,
            last_declared_refill: None,
            pending_refill: None,
            last_time: None,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn registry(&self) -> &SchemaRegistry {
        &self.registry
    }

    pub fn stats(&self) -> &FeedStats {
        &self.stats
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn completed(&self) -> &[HygieneEpisode] {
        &self.completed
    }

    fn window_ms(&self) -> Millis {
        self.config.detection.window_ms()
    }

    fn touch(&mut self, t: Millis) {
        self.last_time = Some(self.last_time.map_or(t, |l| l.max(t)));
        self.seq += 1;
    }

    fn near_declared_refill(&self, t: Millis) -> bool {
        let guard = 2 * self.window_ms() + self.config.detection.idle_gap_ms();
        self.last_declared_refill.is_some_and(|d| t - d <= guard && t >= d - guard)
    }

    fn record_refill(&mut self, t: Millis, amount_g: f64, declared: bool) {
        self.content_g = (self.content_g + amount_g).min(self.config.bottle_capacity_g);
        self.refills.push(RefillRecord { timestamp: time::from_millis(t), amount_g, declared });
    }

    fn absorb(&mut self, episodes: Vec<HygieneEpisode>) -> Vec<HygieneEpisode> {
        let mut out = Vec::with_capacity(episodes.len());
        for mut ep in episodes {
            let rise = ep.after_g - ep.before_g;
            let end = time::to_millis(&ep.end);
            if rise >= REFILL_JUMP_G {
                if !self.near_declared_refill(end) {
                    self.record_refill(end, rise, false);
                }
            } else if ep.amount_g > 0.0 {
                self.content_g = (self.content_g - ep.amount_g).max(0.0);
            }
            self.reference_g = Some(ep.after_g);
            if ep.case_ref.is_none() {
                ep.case_ref = self.case_id.clone();
            }
            self.completed.push(ep.clone());
            out.push(ep);
        }
        out
    }

    fn watch_idle_baseline(&mut self, t: Millis) {
        if self.detector.active().is_some() || self.detector.is_settling() {
            self.pending_refill = None;
            return;
        }
        let Some(m) = self.detector.current_median() else { return };
        if let Some(d) = self.last_declared_refill {
            if t - d < self.window_ms() {
                return;
            }
        }
        let Some(r) = self.reference_g else {
            self.reference_g = Some(m);
            return;
        };
        if m - r < REFILL_JUMP_G {
            self.pending_refill = None;
            return;
        }
        // wait one window so the median has fully moved to the new level
        let since = *self.pending_refill.get_or_insert(t);
        if t - since >= self.window_ms() {
            if !self.near_declared_refill(since) {
                self.record_refill(since, m - r, false);
            }
            self.reference_g = Some(m);
            self.pending_refill = None;
        }
    }

    fn advance_step(&mut self) {
        self.step_index = (self.step_index + 1).min(self.config.normative.sequence.len());
    }

    /// Apply one schema-checked reading. Returns episodes it completed.
    pub fn feed_reading(&mut self, reading: &Reading) -> Result<Vec<HygieneEpisode>, MonitorError> {
        let schema = self.registry.resolve(&reading.device_id)?;
        schema.check(reading).map_err(|detail| SensorError::SchemaMismatch { line: 0, detail })?;
        let t = reading.millis();
        if self.last_time.is_some_and(|l| t < l) {
            return Err(MonitorError::OutOfOrder { at: time::format_millis(t) });
        }
        let kind = schema.device_kind;
        let x = reading.value.as_f64();
        let done = match (kind, x) {
            (DeviceKind::Scale, Some(x)) => {
                let eps = self.detector.push_scale(t, x);
                let eps = self.absorb(eps);
                self.watch_idle_baseline(t);
                eps
            }
            (DeviceKind::Distance, Some(d)) => {
                let eps = self.detector.push_distance(t, d);
                self.absorb(eps)
            }
            (DeviceKind::Button, _) => {
                if reading.value == SampleValue::Bool(true) {
                    self.advance_step();
                }
                Vec::new()
            }
            _ => Vec::new(),
        };
        self.stats.readings += 1;
        self.touch(t);
        Ok(done)
    }

    pub fn apply_event(&mut self, event: &FeedEvent) -> Result<(), MonitorError> {
        let t = time::to_millis(&event.timestamp());
        match event {
            FeedEvent::StepComplete { step, .. } => {
                let seq = &self.config.normative.sequence;
                let from = self.step_index.min(seq.len());
                if let Some(k) = seq[from..].iter().position(|s| s == step) {
                    self.step_index = from + k + 1;
                }
            }
            FeedEvent::Refill { amount_g, .. } => {
                let amount = amount_g.unwrap_or(self.config.bottle_capacity_g - self.content_g);
                self.record_refill(t, amount, true);
                self.last_declared_refill = Some(t);
                self.reference_g = None;
            }
            FeedEvent::CaseStart { case_id, .. } => {
                self.case_id = Some(case_id.clone());
                self.step_index = 0;
            }
        }
        self.stats.events += 1;
        self.touch(t);
        Ok(())
    }

    pub fn apply(&mut self, item: &FeedItem) -> Result<Vec<HygieneEpisode>, MonitorError> {
        match item {
            FeedItem::Readings(rs) => {
                let mut out = Vec::new();
                for r in rs {
                    out.extend(self.feed_reading(r)?);
                }
                Ok(out)
            }
            FeedItem::Event(e) => self.apply_event(e).map(|_| Vec::new()),
        }
    }

    pub fn record_error(&mut self, err: &MonitorError) {
        self.stats.errors += 1;
        self.stats.last_error = Some(err.to_string());
    }

    /// Apply an already parsed line, counting it like [`LiveSession::feed_line`].
    pub fn apply_parsed(&mut self, parsed: Result<FeedItem, MonitorError>) -> Vec<HygieneEpisode> {
        self.stats.lines += 1;
        match parsed.and_then(|item| self.apply(&item)) {
            Ok(eps) => eps,
            Err(e) => {
                self.record_error(&e);
                Vec::new()
            }
        }
    }

    /// Parse and apply one feed line. Failures are counted, not fatal.
    pub fn feed_line(&mut self, line: &str) -> Result<Vec<HygieneEpisode>, MonitorError> {
        self.stats.lines += 1;
        if line.trim().is_empty() {
            return Ok(Vec::new());
        }
        let lineno = self.stats.lines as usize;
        let result = parse_feed_line(line, lineno, &self.registry).and_then(|item| self.apply(&item));
        if let Err(e) = &result {
            self.record_error(e);
        }
        result
    }

    /// Close any open episode at end of data.
    pub fn finish(&mut self) -> Vec<HygieneEpisode> {
        let eps = self.detector.finish();
        if eps.is_empty() {
            return eps;
        }
        let out = self.absorb(eps);
        self.seq += 1;
        out
    }

    pub fn snapshot(&self) -> Snapshot {
        let seq_names = &self.config.normative.sequence;
        let now = self.last_time;
        let (active, duration, amount) = match self.detector.active() {
            Some(a) => {
                let dur = now.map_or(0.0, |n| time::seconds_between(a.start, n.max(a.start)));
                let amount = a.lowest_median_g.map_or(0.0, |m| a.before_g - m);
                (true, dur, amount)
            }
            None => (false, 0.0, 0.0),
        };
        Snapshot {
            schema: SNAPSHOT_SCHEMA.to_string(),
            seq: self.seq,
            session_id: self.config.session_id.clone(),
            case_id: self.case_id.clone(),
            current_step: CurrentStep { index: self.step_index, name: seq_names.get(self.step_index).cloned(), total: seq_names.len() },
            steps: seq_names.clone(),
            episode_active: active,
            running_duration_s: duration,
            running_amount_g: amount,
            fill_level_fraction: (self.content_g / self.config.bottle_capacity_g).clamp(0.0, 1.0),
            density_g_per_ml: self.config.detection.density_g_per_ml,
            completed_episodes: self.completed.clone(),
            refills: self.refills.clone(),
            targets: Targets {
                min_duration_s: self.config.thresholds.min_duration_s,
                amount_ml_range: self.config.thresholds.amount_ml_range,
            },
            last_update: now.map(time::from_millis),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{Refill, ScenarioScript, ScriptedEpisode};

    fn session(capacity: f64) -> LiveSession {
        LiveSession::new(SessionConfig { bottle_capacity_g: capacity, ..Default::default() }).unwrap()
    }

    fn script(episodes: Vec<ScriptedEpisode>) -> ScenarioScript {
        ScenarioScript { episodes, ..Default::default() }
    }

    fn run(s: &mut LiveSession, feed: &str) -> Vec<Snapshot> {
        let mut snaps = Vec::new();
        for line in feed.lines() {
            s.feed_line(line).unwrap();
            snaps.push(s.snapshot());
        }
        s.finish();
        snaps
    }

    #[test]
    fn fresh_session_snapshot() {
        let s = session(400.0);
        let snap = s.snapshot();
        assert!(!snap.episode_active);
        assert!(snap.completed_episodes.is_empty());
        assert_eq!(snap.fill_level_fraction, 1.0);
        assert_eq!(snap.schema, SNAPSHOT_SCHEMA);
        assert_eq!(snap, s.snapshot());
        assert_eq!(snap.current_step.index, 0);
        assert_eq!(snap.current_step.name.as_deref(), Some("Prepare equipment"));
    }

    #[test]
    fn idle_reading_only_moves_the_clock() {
        let mut s = session(400.0);
        let before = s.snapshot();
        s.feed_line(r#"{"device_id":"scale-1","timestamp":"2024-06-10T08:00:00Z","channel":"weight","value":500.0,"unit":"g"}"#).unwrap();
        let after = s.snapshot();
        assert_eq!(after.seq, before.seq + 1);
        assert!(after.last_update.is_some());
        assert_eq!(Snapshot { seq: before.seq, last_update: None, ..after }, before);
    }

    #[test]
    fn one_episode_lowers_fill_level() {
        let sim = script(vec![ScriptedEpisode::new(30.0, 30.0, 4.0)]).generate().unwrap();
        let mut s = session(400.0);
        let snaps = run(&mut s, &sim.feed_jsonl());
        let snap = s.snapshot();
        assert_eq!(snap.completed_episodes.len(), 1);
        assert!((snap.fill_level_fraction - 0.99).abs() < 1e-12);
        assert!(snaps.iter().any(|x| x.episode_active));
        assert!(snaps.windows(2).all(|w| w[1].seq > w[0].seq));
        let mut last = None;
        for x in snaps.iter().filter(|x| x.episode_active) {
            if let Some(prev) = last {
                assert!(x.running_duration_s >= prev);
            }
            last = Some(x.running_duration_s);
        }
        let peak_amount = snaps.iter().map(|x| x.running_amount_g).fold(f64::MIN, f64::max);
        assert!(peak_amount > 0.0);
    }

    #[test]
    fn refills_raise_fill_level() {
        let mut sc = script(vec![ScriptedEpisode::new(30.0, 30.0, 4.0), ScriptedEpisode::new(150.0, 30.0, 4.0)]);
        sc.refills.push(Refill { at_s: 100.0, amount_g: 40.0, declared: false });
        let sim = sc.generate().unwrap();
        let mut s = session(400.0);
        let snaps = run(&mut s, &sim.feed_jsonl());
        let snap = s.snapshot();
        assert_eq!(snap.refills.len(), 1, "{:?} {:?}", snap.refills, snap.completed_episodes);
        assert!((snap.refills[0].amount_g - 40.0).abs() < 1e-9);
        assert!(!snap.refills[0].declared);
        // full bottle, minus 4 g, capped refill back to full, minus 4 g
        assert!((snap.fill_level_fraction - 0.99).abs() < 1e-12);
        let mut prev = 1.0;
        let mut refills_seen = 0;
        for x in &snaps {
            if x.refills.len() == refills_seen {
                assert!(x.fill_level_fraction <= prev);
            }
            refills_seen = x.refills.len();
            prev = x.fill_level_fraction;
        }
    }

    #[test]
    fn declared_refill_is_not_counted_twice() {
        let mut sc = script(vec![ScriptedEpisode::new(30.0, 30.0, 40.0)]);
        sc.refills.push(Refill { at_s: 100.0, amount_g: 30.0, declared: true });
        let sim = sc.generate().unwrap();
        let mut s = session(400.0);
        run(&mut s, &sim.feed_jsonl());
        let snap = s.snapshot();
        assert_eq!(snap.refills.len(), 1);
        assert!(snap.refills[0].declared);
        assert!((snap.fill_level_fraction - 390.0 / 400.0).abs() < 1e-12);
    }

    #[test]
    fn steps_follow_buttons_and_events() {
        let mut s = session(400.0);
        let press = r#"{"device_id":"button-1","timestamp":"2024-06-10T08:00:01Z","channel":"pressed","value":true,"unit":""}"#;
        s.feed_line(press).unwrap();
        assert_eq!(s.snapshot().current_step.index, 1);
        s.feed_line(r#"{"event":"step_complete","step":"Put on gloves","timestamp":"2024-06-10T08:00:02Z"}"#).unwrap();
        assert_eq!(s.snapshot().current_step.name.as_deref(), Some("Disinfect venipuncture site"));
        s.feed_line(r#"{"event":"case_start","case_id":"c7","timestamp":"2024-06-10T08:00:03Z"}"#).unwrap();
        let snap = s.snapshot();
        assert_eq!((snap.current_step.index, snap.case_id.as_deref()), (0, Some("c7")));
    }

    #[test]
    fn bad_lines_are_counted() {
        let mut s = session(400.0);
        assert!(s.feed_line("not json").is_err());
        let lbs = r#"{"device_id":"scale-1","timestamp":"2024-06-10T08:00:00Z","channel":"weight","value":1.0,"unit":"lbs"}"#;
        assert!(matches!(s.feed_line(lbs), Err(MonitorError::Sensor(SensorError::SchemaMismatch { .. }))));
        assert_eq!(s.stats().errors, 2);
        assert_eq!(s.stats().lines, 2);
        let ok = r#"{"device_id":"scale-1","timestamp":"2024-06-10T08:00:05Z","channel":"weight","value":1.0,"unit":"g"}"#;
        s.feed_line(ok).unwrap();
        let old = ok.replace("08:00:05", "08:00:01");
        assert!(matches!(s.feed_line(&old), Err(MonitorError::OutOfOrder { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(SessionConfig::from_json(r#"{"bottle_capacity_g": 0}"#).is_err());
        assert!(SessionConfig::from_json(r#"{"replay_speed": -1}"#).is_err());
        assert_eq!(SessionConfig::from_json("{}").unwrap(), SessionConfig::default());
    }
}

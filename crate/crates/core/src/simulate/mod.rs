//! Synthetic sensor scenarios with known ground truth.
//!
//! A script lists hand-hygiene episodes; the generator renders the scale,
//! distance, motion and button readings they would produce. Episode starts
//! snap to the scale sampling grid and ends to the distance grid, so the
//! truth file names exactly the instants a detector should report.

pub mod demo;
pub mod random;

use chrono::{DateTime, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{DetectionParams, Reading, SampleValue, TimeSeries};
use crate::time::{self, Millis};

pub use random::{random_script, RandomScriptOptions};

pub const SCALE_DEVICE: &str = "scale-1";
pub const DISTANCE_DEVICE: &str = "distance-1";
pub const MOTION_DEVICE: &str = "motion-1";
pub const BUTTON_DEVICE: &str = "button-1";

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("invalid script: {0}")]
    Invalid(String),
    #[error("episode {index}: {detail}")]
    Episode { index: usize, detail: String },
    #[error("cannot parse script: {0}")]
    Syntax(String),
}

fn default_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 6, 10, 8, 0, 0).single().expect("valid date")
}

fn d_baseline() -> f64 {
    500.0
}
fn d_period() -> f64 {
    0.1
}
fn d_near() -> f64 {
    400.0
}
fn d_far() -> f64 {
    2500.0
}
fn d_approach() -> f64 {
    5.0
}
fn d_presses() -> u32 {
    2
}
fn d_peak() -> f64 {
    400.0
}
fn d_press_s() -> f64 {
    2.0
}
fn d_gap_s() -> f64 {
    4.0
}

/// How the bottle is pressed during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressProfile {
    #[serde(default = "d_presses")]
    pub presses: u32,
    /// Extra weight on the scale while pressing.
    #[serde(default = "d_peak")]
    pub peak_g: f64,
    #[serde(default = "d_press_s")]
    pub press_s: f64,
    /// Pause between two presses.
    #[serde(default = "d_gap_s")]
    pub gap_s: f64,
}

impl Default for PressProfile {
    fn default() -> Self {
        Self { presses: d_presses(), peak_g: d_peak(), press_s: d_press_s(), gap_s: d_gap_s() }
    }
}

impl PressProfile {
    fn span_s(&self) -> f64 {
        self.presses as f64 * self.press_s + (self.presses.saturating_sub(1)) as f64 * self.gap_s
    }
}

/// Sustained sine disturbance on the scale after the last press.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub amplitude_g: f64,
    pub period_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedEpisode {
    pub start_offset_s: f64,
    pub duration_s: f64,
    pub dispensed_g: f64,
    #[serde(default)]
    pub press_profile: PressProfile,
    /// Calibration shift applied after the last press.
    #[serde(default)]
    pub drift_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<Oscillation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_ref: Option<String>,
    /// Free label such as `basic`, `disturbance` or `two-patients`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ScriptedEpisode {
    pub fn new(start_offset_s: f64, duration_s: f64, dispensed_g: f64) -> Self {
        Self {
            start_offset_s,
            duration_s,
            dispensed_g,
            press_profile: PressProfile::default(),
            drift_g: 0.0,
            oscillation: None,
            case_ref: None,
            activity_ref: None,
            label: None,
        }
    }
}

/// A bottle refill: the scale level rises by `amount_g` at `at_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Refill {
    pub at_s: f64,
    pub amount_g: f64,
    /// Also emit a refill event line on the feed.
    #[serde(default)]
    pub declared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default = "default_start", with = "crate::time::serde_ms")]
    pub start: DateTime<Utc>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_baseline")]
    pub baseline_g: f64,
    #[serde(default)]
    pub noise_std_g: f64,
    #[serde(default)]
    pub distance_noise_mm: f64,
    #[serde(default = "d_period")]
    pub sample_period_s: f64,
    /// Defaults to `sample_period_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_period_s: Option<f64>,
    #[serde(default = "d_near")]
    pub near_mm: f64,
    #[serde(default = "d_far")]
    pub far_mm: f64,
    /// Time the performer spends walking up before the first press.
    #[serde(default = "d_approach")]
    pub approach_s: f64,
    /// Total length; by default long enough for the last episode to settle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_s: Option<f64>,
    #[serde(default)]
    pub episodes: Vec<ScriptedEpisode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refills: Vec<Refill>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

/// Ground truth for one scripted episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEpisode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(with = "crate::time::serde_ms")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::time::serde_ms")]
    pub end: DateTime<Utc>,
    pub duration_s: f64,
    pub dispensed_g: f64,
    pub drift_g: f64,
    /// `dispensed_g - drift_g`: what a scale comparison should report.
    pub expected_amount_g: f64,
    pub expect_negative: bool,
    pub oscillating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub sample_period_s: f64,
    pub distance_period_s: f64,
    pub noise_std_g: f64,
    /// Parameters sized for the script's noise and sampling rate.
    pub params: DetectionParams,
    pub episodes: Vec<TruthEpisode>,
}

/// Feed-level event emitted alongside readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefillEvent {
    pub event: String,
    #[serde(with = "crate::time::serde_ms")]
    pub timestamp: DateTime<Utc>,
    pub amount_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// All readings in time order.
    pub readings: Vec<Reading>,
    pub refill_events: Vec<RefillEvent>,
    pub truth: Truth,
}

impl Simulation {
    fn series(&self, device: &str, channel: &str, unit: &str) -> TimeSeries {
        let pts =
            self.readings.iter().filter(|r| r.device_id == device).filter_map(|r| r.value.as_f64().map(|v| (r.millis(), v))).collect();
        TimeSeries::from_samples(device, channel, unit, pts)
    }

    pub fn scale_series(&self) -> TimeSeries {
        self.series(SCALE_DEVICE, "weight", "g")
    }

    pub fn distance_series(&self) -> TimeSeries {
        self.series(DISTANCE_DEVICE, "distance", "mm")
    }

    /// Readings and declared refill events as a JSON-lines feed.
    pub fn feed_jsonl(&self) -> String {
        let mut lines: Vec<(Millis, usize, String)> =
            self.readings.iter().enumerate().map(|(i, r)| (r.millis(), i, serde_json::to_string(r).expect("reading serializes"))).collect();
        let n = lines.len();
        for (k, e) in self.refill_events.iter().enumerate() {
            lines.push((time::to_millis(&e.timestamp), n + k, serde_json::to_string(e).expect("event serializes")));
        }
        lines.sort_by_key(|l| (l.0, l.1));
        let mut out = String::new();
        for (_, _, l) in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }
}

fn ms(s: f64) -> Millis {
    time::secs_to_millis(s)
}

fn snap(t: Millis, period: Millis) -> Millis {
    ((t as f64 / period as f64).round() as Millis) * period
}

fn positive(name: &str, x: f64) -> Result<(), ScriptError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ScriptError::Invalid(format!("{name} must be positive, got {x}")))
    }
}

/// Snapped episode bounds in milliseconds from script start.
struct Placed<'a> {
    ep: &'a ScriptedEpisode,
    start: Millis,
    end: Millis,
    press_starts: Vec<Millis>,
    press_ms: Millis,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let script: Self = serde_json::from_str(text).map_err(|e| ScriptError::Syntax(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn distance_period(&self) -> f64 {
        self.distance_period_s.unwrap_or(self.sample_period_s)
    }

    /// Detection parameters sized for this script.
    pub fn params(&self) -> DetectionParams {
        DetectionParams::calibrated(self.noise_std_g, self.sample_period_s)
    }

    pub fn validate(&self) -> Result<(), ScriptError> {
        positive("sample_period_s", self.sample_period_s)?;
        positive("distance_period_s", self.distance_period())?;
        positive("baseline_g", self.baseline_g)?;
        if !(self.noise_std_g >= 0.0 && self.distance_noise_mm >= 0.0) {
            return Err(ScriptError::Invalid("noise must be non-negative".into()));
        }
        if self.approach_s < 0.0 {
            return Err(ScriptError::Invalid("approach_s must be non-negative".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (index, e) in self.episodes.iter().enumerate() {
            let bad = |detail: String| Err(ScriptError::Episode { index, detail });
            if e.start_offset_s < 0.0 {
                return bad("start_offset_s is negative".into());
            }
            if !(e.duration_s > 0.0) {
                return bad("duration_s must be positive".into());
            }
            if !(e.dispensed_g >= 0.0) {
                return bad("dispensed_g must be non-negative".into());
            }
            let p = &e.press_profile;
            if p.presses == 0 || p.press_s < self.sample_period_s || p.gap_s < 0.0 || !(p.peak_g > 0.0) {
                return bad("press profile needs at least one press of one sample or longer".into());
            }
            if p.span_s() >= e.duration_s {
                return bad(format!("presses take {} s, longer than the episode", p.span_s()));
            }
            if e.start_offset_s < prev_end {
                return bad("overlaps the previous episode".into());
            }
            if e.oscillation.is_some() && index + 1 != self.episodes.len() {
                return bad("only the last episode may oscillate".into());
            }
            prev_end = e.start_offset_s + e.duration_s;
        }
        Ok(())
    }

    fn total_ms(&self, placed: &[Placed]) -> Millis {
        match self.total_s {
            Some(t) => ms(t),
            None => {
                let p = self.params();
                let last = placed.last().map_or(ms(p.settle_window_s), |e| e.end);
                last + ms(p.settle_window_s + p.leave_hold_s) + 15_000
            }
        }
    }

    fn place(&self) -> Vec<Placed<'_>> {
        let sp = ms(self.sample_period_s);
        let dp = ms(self.distance_period());
        self.episodes
            .iter()
            .map(|ep| {
                let start = snap(ms(ep.start_offset_s), sp);
                let end = snap(ms(ep.start_offset_s + ep.duration_s), dp);
                let pp = &ep.press_profile;
                let press_ms = ms(pp.press_s);
                let press_starts = (0..pp.presses).map(|k| start + k as Millis * (press_ms + ms(pp.gap_s))).collect();
                Placed { ep, start, end, press_starts, press_ms }
            })
            .collect()
    }

    /// Noise-free scale value at `t` milliseconds after the script start.
    fn scale_at(&self, placed: &[Placed], t: Millis) -> f64 {
        let mut level = self.baseline_g;
        for r in &self.refills {
            if t >= ms(r.at_s) {
                level += r.amount_g;
            }
        }
        for p in placed {
            if t < p.start {
                break;
            }
            let n = p.press_starts.len() as f64;
            let mut pressing = false;
            let mut last_release = p.start;
            for &ps in &p.press_starts {
                if t >= ps + p.press_ms {
                    level -= p.ep.dispensed_g / n;
                    last_release = ps + p.press_ms;
                } else if t >= ps {
                    pressing = true;
                }
            }
            let finished = t >= *p.press_starts.last().expect("presses") + p.press_ms;
            if finished {
                level += p.ep.drift_g;
                if let Some(o) = p.ep.oscillation {
                    let phase = (t - last_release) as f64 / 1000.0 / o.period_s;
                    level += o.amplitude_g * (std::f64::consts::TAU * phase).sin();
                }
            }
            if pressing {
                level += p.ep.press_profile.peak_g;
            }
        }
        level
    }

    fn distance_at(&self, placed: &[Placed], t: Millis) -> (f64, bool) {
        let approach = ms(self.approach_s);
        for p in placed {
            if t >= p.start - approach && t < p.end {
                if t >= p.start || approach == 0 {
                    return (self.near_mm, true);
                }
                let frac = (p.start - t) as f64 / approach as f64;
                return (self.near_mm + frac * (self.far_mm - self.near_mm), true);
            }
        }
        (self.far_mm, false)
    }

    pub fn generate(&self) -> Result<Simulation, ScriptError> {
        self.validate()?;
        let placed = self.place();
        let total = self.total_ms(&placed);
        let t0 = time::to_millis(&self.start);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale_noise = Normal::new(0.0, self.noise_std_g).map_err(|e| ScriptError::Invalid(e.to_string()))?;
        let dist_noise = Normal::new(0.0, self.distance_noise_mm).map_err(|e| ScriptError::Invalid(e.to_string()))?;

        let reading = |device: &str, t: Millis, channel: &str, value: SampleValue, unit: &str| Reading {
            device_id: device.into(),
            timestamp: time::from_millis(t0 + t),
            channel: channel.into(),
            value,
            unit: unit.into(),
        };
        // (time, device order, reading)
        let mut out: Vec<(Millis, u8, Reading)> = Vec::new();
        let sp = ms(self.sample_period_s);
        let mut t = 0;
        while t <= total {
            let x = self.scale_at(&placed, t) + scale_noise.sample(&mut rng);
            out.push((t, 0, reading(SCALE_DEVICE, t, "weight", SampleValue::Number(x), "g")));
            t += sp;
        }
        let dp = ms(self.distance_period());
        let mut t = 0;
        let mut motion: Option<bool> = None;
        while t <= total {
            let (d, near) = self.distance_at(&placed, t);
            out.push((t, 1, reading(DISTANCE_DEVICE, t, "distance", SampleValue::Number(d + dist_noise.sample(&mut rng)), "mm")));
            if motion != Some(near) {
                out.push((t, 2, reading(MOTION_DEVICE, t, "motion", SampleValue::Bool(near), "")));
                motion = Some(near);
            }
            t += dp;
        }
        for p in &placed {
            out.push((p.end, 3, reading(BUTTON_DEVICE, p.end, "pressed", SampleValue::Bool(true), "")));
        }
        out.sort_by_key(|(t, order, _)| (*t, *order));

        let refill_events = self
            .refills
            .iter()
            .filter(|r| r.declared)
            .map(|r| RefillEvent { event: "refill".into(), timestamp: time::from_millis(t0 + ms(r.at_s)), amount_g: r.amount_g })
            .collect();

        let episodes = placed
            .iter()
            .map(|p| {
                let expected = p.ep.dispensed_g - p.ep.drift_g;
                TruthEpisode {
                    case_ref: p.ep.case_ref.clone(),
                    activity_ref: p.ep.activity_ref.clone(),
                    label: p.ep.label.clone(),
                    start: time::from_millis(t0 + p.start),
                    end: time::from_millis(t0 + p.end),
                    duration_s: time::seconds_between(p.start, p.end),
                    dispensed_g: p.ep.dispensed_g,
                    drift_g: p.ep.drift_g,
                    expected_amount_g: expected,
                    expect_negative: expected < 0.0,
                    oscillating: p.ep.oscillation.is_some(),
                }
            })
            .collect();

        Ok(Simulation {
            readings: out.into_iter().map(|(_, _, r)| r).collect(),
            refill_events,
            truth: Truth {
                sample_period_s: self.sample_period_s,
                distance_period_s: self.distance_period(),
                noise_std_g: self.noise_std_g,
                params: self.params(),
                episodes,
            },
        })
    }
}

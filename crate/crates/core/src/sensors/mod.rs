//! Sensor readings, device schemas, hand-hygiene episode detection and
//! energy aggregation.

pub mod detect;
pub mod energy;
pub mod ingest;
pub mod online;
pub mod schema;
pub mod window;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{self, Millis};

pub use detect::{detect_hygiene_episodes, dispense_amount, DispenseResult, EpisodeBounds};
pub use energy::{energy_summary, EnergySummary, Stay};
pub use ingest::{ingest, ingest_devices, IngestResult};
pub use online::OnlineDetector;
pub use schema::{Accumulation, ChannelSpec, DeviceKind, DeviceSchema, SchemaRegistry, ValueType};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("line {line}: schema mismatch: {detail}")]
    SchemaMismatch { line: usize, detail: String },
    #[error("line {line}: cannot parse timestamp {raw:?}")]
    TimestampParseError { line: usize, raw: String },
    #[error("unit error: {0}")]
    UnitError(String),
    #[error("empty series: {0}")]
    EmptySeries(String),
    #[error("episode bounds outside series range")]
    OutOfRange,
    #[error("no samples inside window {0}")]
    EmptyWindow(String),
    #[error("unknown device schema {0:?}")]
    UnknownSchema(String),
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
}

/// Value carried by a single reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl SampleValue {
    /// Numeric view used by time series; booleans map to 1 and 0.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            SampleValue::Number(x) => Some(*x),
            SampleValue::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            SampleValue::Text(_) => None,
        }
    }
}

/// One timestamped sample of one device channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub device_id: String,
    #[serde(with = "crate::time::serde_ms")]
    pub timestamp: DateTime<Utc>,
    pub channel: String,
    pub value: SampleValue,
    #[serde(default)]
    pub unit: String,
}

impl Reading {
    pub fn millis(&self) -> Millis {
        time::to_millis(&self.timestamp)
    }
}

/// Ordered samples of one channel; timestamps strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub device_id: String,
    pub channel: String,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulation: Option<Accumulation>,
    /// `(epoch milliseconds, value)` pairs.
    pub points: Vec<(Millis, f64)>,
    /// Number of samples dropped because a later sample had the same timestamp.
    #[serde(default)]
    pub collapsed: usize,
}

impl TimeSeries {
    pub fn new(device_id: &str, channel: &str, unit: &str) -> Self {
        Self {
            device_id: device_id.into(),
            channel: channel.into(),
            unit: unit.into(),
            accumulation: None,
            points: Vec::new(),
            collapsed: 0,
        }
    }

    /// Builds a series from samples in arrival order. Samples are sorted by
    /// time and duplicates collapse to the last one received.
    pub fn from_samples(device_id: &str, channel: &str, unit: &str, samples: Vec<(Millis, f64)>) -> Self {
        let mut series = Self::new(device_id, channel, unit);
        let mut indexed: Vec<(usize, (Millis, f64))> = samples.into_iter().enumerate().collect();
        indexed.sort_by_key(|(i, (t, _))| (*t, *i));
        for (_, (t, v)) in indexed {
            match series.points.last_mut() {
                Some(last) if last.0 == t => {
                    last.1 = v;
                    series.collapsed += 1;
                }
                _ => series.points.push((t, v)),
            }
        }
        series
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_time(&self) -> Option<Millis> {
        self.points.first().map(|p| p.0)
    }

    pub fn last_time(&self) -> Option<Millis> {
        self.points.last().map(|p| p.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityFlag {
    NegativeAmount,
    NoSettle,
    SensorGap,
}

/// A detected hand-hygiene activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HygieneEpisode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_ref: Option<String>,
    #[serde(with = "crate::time::serde_ms")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::time::serde_ms")]
    pub end: DateTime<Utc>,
    pub duration_s: f64,
    pub amount_g: f64,
    pub amount_ml: f64,
    pub before_g: f64,
    pub after_g: f64,
    #[serde(default)]
    pub quality: BTreeSet<QualityFlag>,
}

impl HygieneEpisode {
    pub(crate) fn assemble(
        start: Millis,
        end: Millis,
        dispense: &DispenseResult,
        density: f64,
        mut quality: BTreeSet<QualityFlag>,
    ) -> Self {
        quality.extend(dispense.quality.iter().copied());
        Self {
            case_ref: None,
            activity_ref: None,
            start: time::from_millis(start),
            end: time::from_millis(end),
            duration_s: time::seconds_between(start, end),
            amount_g: dispense.amount_g,
            amount_ml: dispense.amount_g / density,
            before_g: dispense.before_g,
            after_g: dispense.after_g,
            quality,
        }
    }

    pub fn has(&self, flag: QualityFlag) -> bool {
        self.quality.contains(&flag)
    }
}

/// Thresholds for episode detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    pub min_peak_delta_g: f64,
    pub idle_gap_s: f64,
    pub settle_window_s: f64,
    pub settle_tolerance_g: f64,
    pub leave_distance_mm: f64,
    pub leave_hold_s: f64,
    pub density_g_per_ml: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            min_peak_delta_g: 50.0,
            idle_gap_s: 10.0,
            settle_window_s: 3.0,
            settle_tolerance_g: 0.5,
            leave_distance_mm: 1500.0,
            leave_hold_s: 2.0,
            density_g_per_ml: 0.85,
        }
    }
}

/// z-score used when sizing median windows for a noisy scale.
const CALIBRATION_Z: f64 = 4.5;
/// Target standard error budget for an amount, in grams.
const CALIBRATION_TARGET_G: f64 = 0.2;

impl DetectionParams {
    /// Defaults with the settle window and tolerance widened for a scale
    /// with Gaussian noise `noise_std_g` sampled every `sample_period_s`.
    ///
    /// The median of `n` samples has standard error about
    /// `1.2533 * sigma / sqrt(n)`; the window holds enough samples that the
    /// difference of two medians stays within 0.2 g at 4.5 standard errors.
    pub fn calibrated(noise_std_g: f64, sample_period_s: f64) -> Self {
        let mut params = Self::default();
        if noise_std_g > 0.0 {
            let k = CALIBRATION_Z * 1.2533 * std::f64::consts::SQRT_2 * noise_std_g / CALIBRATION_TARGET_G;
            let samples = (k * k).ceil();
            params.settle_window_s = params.settle_window_s.max(samples * sample_period_s);
            params.settle_tolerance_g = 0.5 + 12.0 * noise_std_g;
        }
        params
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        let fields = [
            ("min_peak_delta_g", self.min_peak_delta_g),
            ("idle_gap_s", self.idle_gap_s),
            ("settle_window_s", self.settle_window_s),
            ("settle_tolerance_g", self.settle_tolerance_g),
            ("leave_distance_mm", self.leave_distance_mm),
            ("leave_hold_s", self.leave_hold_s),
            ("density_g_per_ml", self.density_g_per_ml),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(SensorError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub(crate) fn window_ms(&self) -> Millis {
        time::secs_to_millis(self.settle_window_s)
    }

    pub(crate) fn idle_gap_ms(&self) -> Millis {
        time::secs_to_millis(self.idle_gap_s)
    }

    pub(crate) fn hold_ms(&self) -> Millis {
        time::secs_to_millis(self.leave_hold_s)
    }
}

//! Energy per stay from smart plug and HVAC channels.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::schema::Accumulation;
use super::{SensorError, TimeSeries};
use crate::time::{self, Millis};

/// A guest stay: the time window plus occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stay {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(with = "crate::time::serde_ms")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::time::serde_ms")]
    pub end: DateTime<Utc>,
    pub n_guests: u32,
    pub n_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayEnergy {
    pub stay: Stay,
    pub appliances_kwh: f64,
    pub hvac_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub e_appliances_kwh: f64,
    pub e_hvac_kwh: f64,
    pub per_stay_appliances_kwh: f64,
    pub per_stay_hvac_kwh: f64,
    pub guest_days: u64,
    pub per_guest_day_appliances_kwh: f64,
    pub per_guest_day_hvac_kwh: f64,
    pub windows: Vec<StayEnergy>,
}

pub const STATE_CHANNEL: &str = "device_state";
pub const POWER_CHANNEL: &str = "instantaneous_power_w";

/// How a device's energy is derived.
enum Source<'a> {
    Energy(&'a TimeSeries, Accumulation),
    Power(&'a TimeSeries),
}

fn pick_source(channels: &BTreeMap<String, TimeSeries>) -> Result<Source<'_>, SensorError> {
    if let Some(series) = channels.values().find(|s| s.accumulation.is_some()) {
        if series.unit != "Wh" {
            return Err(SensorError::UnitError(format!("energy channel {} is in {:?}, expected \"Wh\"", series.channel, series.unit)));
        }
        return Ok(Source::Energy(series, series.accumulation.expect("checked")));
    }
    match channels.get(POWER_CHANNEL) {
        Some(p) if p.unit == "W" => Ok(Source::Power(p)),
        Some(p) => Err(SensorError::UnitError(format!("power channel is in {:?}, expected \"W\"", p.unit))),
        None => Err(SensorError::UnitError("no energy (Wh) or power (W) channel".into())),
    }
}

/// Held on/off state at `t`; devices without a state channel count as on.
fn is_on(state: Option<&TimeSeries>, t: Millis) -> bool {
    match state {
        None => true,
        Some(s) => {
            let i = s.points.partition_point(|p| p.0 <= t);
            i > 0 && s.points[i - 1].1 != 0.0
        }
    }
}

/// Watt-hours consumed by one device inside `[from, to]`. Each sampling
/// interval counts when it lies inside the window and the device was on at
/// its start.
pub fn device_energy_wh(channels: &BTreeMap<String, TimeSeries>, from: Millis, to: Millis) -> Result<f64, SensorError> {
    let state = channels.get(STATE_CHANNEL);
    let source = pick_source(channels)?;
    let series = match source {
        Source::Energy(s, _) | Source::Power(s) => s,
    };
    let inside = series.points.iter().filter(|p| p.0 >= from && p.0 <= to).count();
    if inside == 0 {
        return Err(SensorError::EmptyWindow(format!("{}..{}", time::format_millis(from), time::format_millis(to))));
    }
    let mut total = 0.0;
    for pair in series.points.windows(2) {
        let ((t0, v0), (t1, v1)) = (pair[0], pair[1]);
        if t0 < from || t1 > to || !is_on(state, t0) {
            continue;
        }
        total += match source {
            Source::Energy(_, Accumulation::Interval) => v1,
            Source::Energy(_, Accumulation::Cumulative) => {
                if v1 >= v0 {
                    v1 - v0
                } else {
                    v1
                }
            }
            Source::Power(_) => (v0 + v1) / 2.0 * ((t1 - t0) as f64 / 3_600_000.0),
        };
    }
    if total < 0.0 {
        return Err(SensorError::UnitError("negative energy reading".into()));
    }
    Ok(total)
}

/// Energy per stay and per guest-day. An empty channel map for a device
/// class means that class is not metered and contributes zero.
pub fn energy_summary(
    plug: &BTreeMap<String, TimeSeries>,
    hvac: &BTreeMap<String, TimeSeries>,
    stays: &[Stay],
) -> Result<EnergySummary, SensorError> {
    let mut windows = Vec::with_capacity(stays.len());
    let mut guest_days = 0u64;
    for stay in stays {
        let (from, to) = (time::to_millis(&stay.start), time::to_millis(&stay.end));
        let energy = |channels: &BTreeMap<String, TimeSeries>| -> Result<f64, SensorError> {
            if channels.is_empty() {
                Ok(0.0)
            } else {
                Ok(device_energy_wh(channels, from, to)? / 1000.0)
            }
        };
        windows.push(StayEnergy { stay: stay.clone(), appliances_kwh: energy(plug)?, hvac_kwh: energy(hvac)? });
        guest_days += u64::from(stay.n_guests) * u64::from(stay.n_days);
    }
    let e_app: f64 = windows.iter().map(|w| w.appliances_kwh).sum();
    let e_hvac: f64 = windows.iter().map(|w| w.hvac_kwh).sum();
    let per = |x: f64, n: f64| if n > 0.0 { x / n } else { 0.0 };
    Ok(EnergySummary {
        e_appliances_kwh: e_app,
        e_hvac_kwh: e_hvac,
        per_stay_appliances_kwh: per(e_app, windows.len() as f64),
        per_stay_hvac_kwh: per(e_hvac, windows.len() as f64),
        guest_days,
        per_guest_day_appliances_kwh: per(e_app, guest_days as f64),
        per_guest_day_hvac_kwh: per(e_hvac, guest_days as f64),
        windows,
    })
}

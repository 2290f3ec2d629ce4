//! Batch detection of hand-hygiene episodes from a scale and a distance sensor.
//!
//! An episode starts at the first scale sample that rises at least
//! `min_peak_delta_g` above the trailing median of the previous
//! `settle_window_s`, provided the scale was quiet for `idle_gap_s`.
//! It ends when the performer leaves: the first distance sample above
//! `leave_distance_mm` that stays above for `leave_hold_s`. The hold counts as
//! satisfied once any scale or distance reading arrives at or after
//! `run_start + leave_hold_s` without an interrupting close reading.
//!
//! The dispensed amount compares the trailing median before the start with
//! the median of the first settled window after the end.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::window::{range_and_median, RollingMedian};
use super::{DetectionParams, HygieneEpisode, QualityFlag, SensorError, TimeSeries};
use crate::time::Millis;

/// Time bounds handed to [`dispense_amount`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeBounds {
    pub start: Millis,
    pub end: Millis,
    /// Exclusive limit of the settle search; usually the next episode start.
    pub horizon: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispenseResult {
    pub amount_g: f64,
    pub before_g: f64,
    pub after_g: f64,
    pub quality: BTreeSet<QualityFlag>,
}

impl DispenseResult {
    pub(crate) fn new(before_g: f64, after_g: f64, settled: bool) -> Self {
        let amount_g = before_g - after_g;
        let mut quality = BTreeSet::new();
        if !settled {
            quality.insert(QualityFlag::NoSettle);
        }
        if amount_g < 0.0 {
            quality.insert(QualityFlag::NegativeAmount);
        }
        Self { amount_g, before_g, after_g, quality }
    }
}

/// First settled window among `samples`, all of which lie in `[end, horizon)`.
///
/// Candidates are tried in order; a candidate at `tau` is decidable once some
/// sample at or after `tau + width` exists.
pub(crate) fn settled_median(samples: &[(Millis, f64)], width: Millis, tolerance: f64) -> Option<f64> {
    let last = samples.last()?.0;
    for (i, &(tau, _)) in samples.iter().enumerate() {
        if tau + width > last {
            return None;
        }
        let j = i + samples[i..].partition_point(|p| p.0 <= tau + width);
        let (range, median) = range_and_median(&samples[i..j]);
        if range <= tolerance {
            return Some(median);
        }
    }
    None
}

/// Dispensed amount for one episode.
pub fn dispense_amount(scale: &TimeSeries, bounds: &EpisodeBounds, params: &DetectionParams) -> Result<DispenseResult, SensorError> {
    let (first, last) = match (scale.first_time(), scale.last_time()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(SensorError::EmptySeries(scale.channel.clone())),
    };
    if bounds.start < first || bounds.start > last || bounds.end < bounds.start {
        return Err(SensorError::OutOfRange);
    }
    let w = params.window_ms();
    let pts = &scale.points;
    let lo = pts.partition_point(|p| p.0 < bounds.start - w);
    let hi = pts.partition_point(|p| p.0 < bounds.start);
    if lo == hi {
        return Err(SensorError::OutOfRange);
    }
    let (_, before) = range_and_median(&pts[lo..hi]);

    let from = pts.partition_point(|p| p.0 < bounds.end);
    let to = match bounds.horizon {
        Some(h) => pts.partition_point(|p| p.0 < h),
        None => pts.len(),
    };
    let after_samples = if from < to { &pts[from..to] } else { &[][..] };
    match settled_median(after_samples, w, params.settle_tolerance_g) {
        Some(after) => Ok(DispenseResult::new(before, after, true)),
        None => {
            // `to > 0` since the start sample precedes the horizon.
            let fallback = pts[to.max(1) - 1].1;
            Ok(DispenseResult::new(before, fallback, false))
        }
    }
}

struct Boundary {
    start: Millis,
    end: Millis,
    /// Time from which the scale may open a new episode.
    released: Millis,
    gap: bool,
}

fn check_unit(series: &TimeSeries, unit: &str) -> Result<(), SensorError> {
    if series.unit != unit {
        return Err(SensorError::UnitError(format!(
            "{} channel {} is in {:?}, expected {:?}",
            series.device_id, series.channel, series.unit, unit
        )));
    }
    if series.is_empty() {
        return Err(SensorError::EmptySeries(format!("{}/{}", series.device_id, series.channel)));
    }
    Ok(())
}

/// Detect episodes; see the module documentation for the exact rules.
pub fn detect_hygiene_episodes(
    scale: &TimeSeries,
    distance: &TimeSeries,
    params: &DetectionParams,
) -> Result<Vec<HygieneEpisode>, SensorError> {
    params.validate()?;
    check_unit(scale, "g")?;
    check_unit(distance, "mm")?;

    let mut all_times: Vec<Millis> = scale.points.iter().chain(&distance.points).map(|p| p.0).collect();
    all_times.sort_unstable();
    let last_reading = *all_times.last().expect("non-empty");

    let end_after = |start: Millis| -> (Millis, Option<Millis>) {
        let mut run: Option<Millis> = None;
        let from = distance.points.partition_point(|p| p.0 <= start);
        for &(t, d) in &distance.points[from..] {
            match run {
                Some(rs) if t >= rs + params.hold_ms() => break,
                Some(_) if d <= params.leave_distance_mm => run = None,
                None if d > params.leave_distance_mm => run = Some(t),
                _ => {}
            }
        }
        match run {
            Some(rs) => {
                let i = all_times.partition_point(|&t| t < rs + params.hold_ms());
                (rs, all_times.get(i).copied())
            }
            None => (last_reading, None),
        }
    };

    let mut boundaries: Vec<Boundary> = Vec::new();
    let mut median = RollingMedian::new(params.window_ms());
    let mut quiet_since = scale.points[0].0;
    let mut released = Millis::MIN;
    for &(t, x) in &scale.points {
        let baseline = median.median_before(t);
        let loud = baseline.is_some_and(|b| (x - b).abs() >= params.min_peak_delta_g);
        if let Some(b) = baseline {
            if t >= released && x - b >= params.min_peak_delta_g && t - quiet_since >= params.idle_gap_ms() {
                let (end, confirmed) = end_after(t);
                released = confirmed.unwrap_or(Millis::MAX);
                if end > t {
                    boundaries.push(Boundary { start: t, end, released, gap: confirmed.is_none() });
                }
            }
        }
        if loud {
            quiet_since = t;
        }
        median.push(t, x);
    }

    let mut episodes = Vec::with_capacity(boundaries.len());
    for (i, b) in boundaries.iter().enumerate() {
        debug_assert!(b.released >= b.end);
        let bounds = EpisodeBounds { start: b.start, end: b.end, horizon: boundaries.get(i + 1).map(|n| n.start) };
        let dispense = dispense_amount(scale, &bounds, params)?;
        let mut flags = BTreeSet::new();
        if b.gap {
            flags.insert(QualityFlag::SensorGap);
        }
        episodes.push(HygieneEpisode::assemble(b.start, b.end, &dispense, params.density_g_per_ml, flags));
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T0: Millis = 1_700_000_000_000;

    fn series(channel: &str, unit: &str, f: impl Fn(f64) -> f64, seconds: f64, period: f64) -> TimeSeries {
        let n = (seconds / period).round() as i64;
        let pts = (0..=n)
            .map(|i| {
                let ms = (i as f64 * period * 1000.0).round() as Millis;
                (T0 + ms, f(ms as f64 / 1000.0))
            })
            .collect();
        TimeSeries::from_samples("dev", channel, unit, pts)
    }

    /// Baseline 500 g, two presses to 900 g inside [20, 45), level `after`
    /// from the second release on, person leaves at 45 s.
    fn scenario(after: f64) -> (TimeSeries, TimeSeries) {
        let scale = series(
            "weight",
            "g",
            |s| match s {
                s if (20.0..22.0).contains(&s) => 900.0,
                s if (22.0..26.0).contains(&s) => 500.0,
                s if (26.0..28.0).contains(&s) => 900.0,
                s if s >= 28.0 => after,
                _ => 500.0,
            },
            80.0,
            0.1,
        );
        let distance = series("distance", "mm", |s| if (15.0..45.0).contains(&s) { 400.0 } else { 2400.0 }, 80.0, 0.1);
        (scale, distance)
    }

    #[test]
    fn flat_scale_has_no_episodes() {
        let scale = series("weight", "g", |_| 500.0, 60.0, 0.5);
        let distance = series("distance", "mm", |s| if s < 30.0 { 300.0 } else { 2000.0 }, 60.0, 0.5);
        assert!(detect_hygiene_episodes(&scale, &distance, &DetectionParams::default()).unwrap().is_empty());
    }

    #[test]
    fn scripted_episode_is_recovered() {
        let (scale, distance) = scenario(496.0);
        let eps = detect_hygiene_episodes(&scale, &distance, &DetectionParams::default()).unwrap();
        assert_eq!(eps.len(), 1);
        let e = &eps[0];
        assert_eq!(e.duration_s, 25.0);
        assert_eq!(e.amount_g, 4.0);
        assert!(e.quality.is_empty());
        assert!((e.amount_ml - 4.0 / 0.85).abs() < 1e-12);
    }

    #[test]
    fn drift_gives_flagged_negative_amount() {
        let (scale, distance) = scenario(501.0);
        let eps = detect_hygiene_episodes(&scale, &distance, &DetectionParams::default()).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].amount_g, -1.0);
        assert!(eps[0].has(QualityFlag::NegativeAmount));
    }

    #[test]
    fn unit_and_empty_errors() {
        let (scale, mut distance) = scenario(496.0);
        distance.unit = "cm".into();
        assert!(matches!(detect_hygiene_episodes(&scale, &distance, &DetectionParams::default()), Err(SensorError::UnitError(_))));
        let empty = TimeSeries::new("dev", "weight", "g");
        let (_, distance) = scenario(496.0);
        assert!(matches!(detect_hygiene_episodes(&empty, &distance, &DetectionParams::default()), Err(SensorError::EmptySeries(_))));
    }

    #[test]
    fn dispense_medians() {
        // before window [7, 10) holds 500.0, after level 496.2
        let scale = series(
            "weight",
            "g",
            |s| {
                if s < 10.0 {
                    500.0
                } else if s < 15.0 {
                    800.0
                } else {
                    496.2
                }
            },
            30.0,
            0.5,
        );
        let bounds = EpisodeBounds { start: T0 + 10_000, end: T0 + 15_000, horizon: None };
        let r = dispense_amount(&scale, &bounds, &DetectionParams::default()).unwrap();
        assert!((r.amount_g - 3.8).abs() < 1e-9);
        assert!(r.quality.is_empty());

        let same = series("weight", "g", |s| if (10.0..15.0).contains(&s) { 800.0 } else { 500.0 }, 30.0, 0.5);
        let r = dispense_amount(&same, &bounds, &DetectionParams::default()).unwrap();
        assert_eq!(r.amount_g, 0.0);
        assert!(r.quality.is_empty());
    }

    #[test]
    fn oscillation_never_settles() {
        let scale = series("weight", "g", |s| if s < 10.0 { 500.0 } else { 496.0 + 3.0 * (s * 2.0).sin() }, 40.0, 0.1);
        let bounds = EpisodeBounds { start: T0 + 10_000, end: T0 + 12_000, horizon: None };
        let r = dispense_amount(&scale, &bounds, &DetectionParams::default()).unwrap();
        assert!(r.quality.contains(&QualityFlag::NoSettle));
        let last = scale.points.last().unwrap().1;
        assert_eq!(r.after_g, last);
    }

    #[test]
    fn out_of_range_bounds() {
        let (scale, _) = scenario(496.0);
        let bad = EpisodeBounds { start: T0 - 5_000, end: T0, horizon: None };
        assert_eq!(dispense_amount(&scale, &bad, &DetectionParams::default()), Err(SensorError::OutOfRange));
        let reversed = EpisodeBounds { start: T0 + 20_000, end: T0 + 10_000, horizon: None };
        assert_eq!(dispense_amount(&scale, &reversed, &DetectionParams::default()), Err(SensorError::OutOfRange));
    }

    #[test]
    fn missing_leave_is_a_sensor_gap() {
        let (scale, _) = scenario(496.0);
        let distance = series("distance", "mm", |_| 400.0, 80.0, 0.1);
        let eps = detect_hygiene_episodes(&scale, &distance, &DetectionParams::default()).unwrap();
        assert_eq!(eps.len(), 1);
        assert!(eps[0].has(QualityFlag::SensorGap));
        assert_eq!(eps[0].end.timestamp_millis(), T0 + 80_000);
    }
}

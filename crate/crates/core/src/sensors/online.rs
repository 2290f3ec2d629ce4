//! Incremental episode detector fed one reading at a time.
//!
//! Applies the same rules as [`super::detect_hygiene_episodes`]; given the
//! scale and distance readings in time order it yields the same episodes.
//! Episodes are emitted once their settle search resolves, which may be a
//! few seconds after the performer leaves.

use std::collections::BTreeSet;

use super::detect::{settled_median, DispenseResult};
use super::window::RollingMedian;
use super::{DetectionParams, HygieneEpisode, QualityFlag};
use crate::time::Millis;

#[derive(Debug, Clone)]
enum Phase {
    Idle,
    Active {
        start: Millis,
        before: f64,
        run: Option<Millis>,
        /// Scale samples after `start`.
        samples: Vec<(Millis, f64)>,
        lowest_median: Option<f64>,
    },
}

#[derive(Debug, Clone)]
struct Settling {
    start: Millis,
    end: Millis,
    before: f64,
    gap: bool,
    samples: Vec<(Millis, f64)>,
}

#[derive(Debug, Clone)]
pub struct OnlineDetector {
    params: DetectionParams,
    median: RollingMedian,
    quiet_since: Option<Millis>,
    last_scale: Option<(Millis, f64)>,
    last_reading: Option<Millis>,
    phase: Phase,
    settling: Option<Settling>,
    /// Median of the trailing window as of the last scale sample.
    current_median: Option<f64>,
}

/// Read-only view of an episode in progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveView {
    pub start: Millis,
    pub before_g: f64,
    /// Lowest trailing median seen since the start, if any.
    pub lowest_median_g: Option<f64>,
    pub leaving_since: Option<Millis>,
}

impl OnlineDetector {
    pub fn new(params: DetectionParams) -> Self {
        Self {
            median: RollingMedian::new(params.window_ms()),
            params,
            quiet_since: None,
            last_scale: None,
            last_reading: None,
            phase: Phase::Idle,
            settling: None,
            current_median: None,
        }
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    pub fn active(&self) -> Option<ActiveView> {
        match &self.phase {
            Phase::Idle => None,
            Phase::Active { start, before, run, lowest_median, .. } => {
                Some(ActiveView { start: *start, before_g: *before, lowest_median_g: *lowest_median, leaving_since: *run })
            }
        }
    }

    /// Whether an ended episode still waits for the scale to settle.
    pub fn is_settling(&self) -> bool {
        self.settling.is_some()
    }

    pub fn current_median(&self) -> Option<f64> {
        self.current_median
    }

    pub fn last_scale(&self) -> Option<(Millis, f64)> {
        self.last_scale
    }

    fn confirm_leave(&mut self, t: Millis, out: &mut Vec<HygieneEpisode>) {
        let hold = self.params.hold_ms();
        if let Phase::Active { run: Some(rs), .. } = self.phase {
            if t >= rs + hold {
                let Phase::Active { start, before, samples, .. } = std::mem::replace(&mut self.phase, Phase::Idle) else { unreachable!() };
                self.begin_settling(start, rs, before, false, samples, out);
            }
        }
    }

    fn begin_settling(
        &mut self,
        start: Millis,
        end: Millis,
        before: f64,
        gap: bool,
        mut samples: Vec<(Millis, f64)>,
        out: &mut Vec<HygieneEpisode>,
    ) {
        samples.retain(|p| p.0 >= end);
        self.settling = Some(Settling { start, end, before, gap, samples });
        self.try_settle(out);
    }

    fn try_settle(&mut self, out: &mut Vec<HygieneEpisode>) {
        let Some(s) = &self.settling else { return };
        if let Some(after) = settled_median(&s.samples, self.params.window_ms(), self.params.settle_tolerance_g) {
            let s = self.settling.take().expect("settling");
            out.push(self.close(&s, DispenseResult::new(s.before, after, true)));
        }
    }

    fn give_up_settling(&mut self, out: &mut Vec<HygieneEpisode>) {
        if let Some(s) = self.settling.take() {
            let fallback = self.last_scale.map(|p| p.1).unwrap_or(s.before);
            out.push(self.close(&s, DispenseResult::new(s.before, fallback, false)));
        }
    }

    fn close(&self, s: &Settling, dispense: DispenseResult) -> HygieneEpisode {
        let mut flags = BTreeSet::new();
        if s.gap {
            flags.insert(QualityFlag::SensorGap);
        }
        HygieneEpisode::assemble(s.start, s.end, &dispense, self.params.density_g_per_ml, flags)
    }

    /// Feed one scale sample in grams. Returns episodes completed by it.
    pub fn push_scale(&mut self, t: Millis, x: f64) -> Vec<HygieneEpisode> {
        let mut out = Vec::new();
        self.confirm_leave(t, &mut out);
        let baseline = self.median.median_before(t);
        let loud = baseline.is_some_and(|b| (x - b).abs() >= self.params.min_peak_delta_g);
        let quiet_since = *self.quiet_since.get_or_insert(t);

        let starts = matches!(self.phase, Phase::Idle)
            && baseline.is_some_and(|b| x - b >= self.params.min_peak_delta_g)
            && t - quiet_since >= self.params.idle_gap_ms();
        if starts {
            self.give_up_settling(&mut out);
            self.phase =
                Phase::Active { start: t, before: baseline.expect("baseline"), run: None, samples: Vec::new(), lowest_median: None };
        } else if let Phase::Active { samples, lowest_median, .. } = &mut self.phase {
            samples.push((t, x));
            if let Some(b) = baseline {
                *lowest_median = Some(lowest_median.map_or(b, |m: f64| m.min(b)));
            }
        } else if let Some(s) = &mut self.settling {
            s.samples.push((t, x));
            self.try_settle(&mut out);
        }

        if loud {
            self.quiet_since = Some(t);
        }
        self.median.push(t, x);
        self.current_median = self.median.median_before(t + 1);
        self.last_scale = Some((t, x));
        self.last_reading = Some(t);
        out
    }

    /// Feed one distance sample in millimetres.
    pub fn push_distance(&mut self, t: Millis, d: f64) -> Vec<HygieneEpisode> {
        let mut out = Vec::new();
        self.confirm_leave(t, &mut out);
        if let Phase::Active { start, run, .. } = &mut self.phase {
            if t > *start {
                match run {
                    Some(_) if d <= self.params.leave_distance_mm => *run = None,
                    None if d > self.params.leave_distance_mm => *run = Some(t),
                    _ => {}
                }
            }
        }
        self.last_reading = Some(t);
        out
    }

    /// Flush at end of data.
    pub fn finish(&mut self) -> Vec<HygieneEpisode> {
        let mut out = Vec::new();
        if let Phase::Active { start, before, run, samples, .. } = std::mem::replace(&mut self.phase, Phase::Idle) {
            let end = run.or(self.last_reading).unwrap_or(start);
            if end > start {
                self.begin_settling(start, end, before, true, samples, &mut out);
            }
        }
        self.give_up_settling(&mut out);
        out
    }
}

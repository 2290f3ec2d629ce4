//! Rolling median over a trailing time window.

use std::collections::VecDeque;

use crate::summary::median_sorted;
use crate::time::Millis;

/// Median of the samples in `[t - width, t)`, maintained incrementally.
#[derive(Debug, Clone)]
pub struct RollingMedian {
    width: Millis,
    arrivals: VecDeque<(Millis, f64)>,
    sorted: Vec<f64>,
}

impl RollingMedian {
    pub fn new(width: Millis) -> Self {
        Self { width, arrivals: VecDeque::new(), sorted: Vec::new() }
    }

    /// Drop samples older than `t - width`.
    pub fn advance_to(&mut self, t: Millis) {
        while let Some(&(ts, v)) = self.arrivals.front() {
            if ts >= t - self.width {
                break;
            }
            self.arrivals.pop_front();
            let i = self.sorted.partition_point(|x| x.total_cmp(&v).is_lt());
            self.sorted.remove(i);
        }
    }

    /// Median of the window ending just before `t`; call before `push(t, ..)`.
    pub fn median_before(&mut self, t: Millis) -> Option<f64> {
        self.advance_to(t);
        if self.sorted.is_empty() {
            None
        } else {
            Some(median_sorted(&self.sorted))
        }
    }

    pub fn push(&mut self, t: Millis, v: f64) {
        self.arrivals.push_back((t, v));
        let i = self.sorted.partition_point(|x| x.total_cmp(&v).is_le());
        self.sorted.insert(i, v);
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// Range and median of a slice of samples.
pub(crate) fn range_and_median(samples: &[(Millis, f64)]) -> (f64, f64) {
    let mut values: Vec<f64> = samples.iter().map(|p| p.1).collect();
    values.sort_by(f64::total_cmp);
    (values[values.len() - 1] - values[0], median_sorted(&values))
}

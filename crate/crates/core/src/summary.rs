//! Order statistics shared by the statistics modules.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        Some(Self { min: sorted[0], max: sorted[n - 1], mean: sorted.iter().sum::<f64>() / n as f64, median: median_sorted(&sorted) })
    }
}

/// Median of an already sorted slice; the mean of the two middle values for even lengths.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(median_sorted(&sorted))
}

/// Round half away from zero to `decimals` places.
pub fn round_to(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_four() {
        let s = Summary::of(&[10.0, 20.0, 30.0, 100.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.median), (10.0, 100.0, 40.0, 25.0));
        assert!(Summary::of(&[]).is_none());
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_to(0.463333, 2), 0.46);
        assert_eq!(round_to(2.5 * 0.4 + 4.1 * 0.4 + 0.004, 3), 2.644);
    }
}

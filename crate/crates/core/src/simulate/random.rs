//! Randomised scripts whose episodes are spaced so every detector window
//! around them stays clean.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PressProfile, ScenarioScript, ScriptedEpisode};
use crate::sensors::DetectionParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScriptOptions {
    pub min_episodes: usize,
    pub max_episodes: usize,
    /// Fixed noise level; drawn from `[0, max_noise_std_g]` when absent.
    pub noise_std_g: Option<f64>,
    pub max_noise_std_g: f64,
    /// Probability that an episode carries a drift exceeding its dispensed amount.
    pub drift_probability: f64,
}

impl Default for RandomScriptOptions {
    fn default() -> Self {
        Self { min_episodes: 1, max_episodes: 20, noise_std_g: None, max_noise_std_g: 1.0, drift_probability: 0.0 }
    }
}

/// Sampling period suited to a noise level: noisy scales sample faster.
pub fn period_for_noise(noise_std_g: f64) -> f64 {
    if noise_std_g > 0.25 {
        0.02
    } else {
        0.05
    }
}

/// Pause needed between two episodes so that settle and baseline windows,
/// the leave hold and the idle gap never overlap.
pub fn min_spacing_s(params: &DetectionParams, approach_s: f64) -> f64 {
    params.settle_window_s.max(params.idle_gap_s).max(params.leave_hold_s + approach_s) + 3.0
}

pub fn random_script(seed: u64, opts: &RandomScriptOptions) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = opts.noise_std_g.unwrap_or_else(|| rng.random_range(0.0..=opts.max_noise_std_g));
    let period = period_for_noise(noise);
    let mut script = ScenarioScript { seed, noise_std_g: noise, sample_period_s: period, distance_noise_mm: 15.0, ..Default::default() };
    let params = script.params();
    let spacing = min_spacing_s(&params, script.approach_s);

    let n = rng.random_range(opts.min_episodes..=opts.max_episodes.max(opts.min_episodes));
    let mut clock = params.settle_window_s.max(params.idle_gap_s).max(script.approach_s) + 5.0;
    for _ in 0..n {
        let presses = rng.random_range(1..=3u32);
        let profile = PressProfile {
            presses,
            peak_g: rng.random_range(150.0..600.0),
            press_s: rng.random_range(1.0..2.5),
            gap_s: rng.random_range(1.0..4.0),
        };
        let duration = profile.span_s() + rng.random_range(8.0..30.0);
        let dispensed = rng.random_range(1.5..6.0);
        let mut episode = ScriptedEpisode::new(clock, duration, dispensed);
        episode.press_profile = profile;
        if rng.random_bool(opts.drift_probability) {
            episode.drift_g = dispensed + rng.random_range(0.5..2.0);
        }
        script.episodes.push(episode);
        clock += duration + spacing + rng.random_range(0.0..20.0);
    }
    script
}

/// One script per study session: `cases` cases with four hygiene episodes
/// each; every third case has a disturbance that adds a fifth.
pub fn study_script(seed: u64, cases: usize) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut script = ScenarioScript { seed, ..Default::default() };
    let spacing = min_spacing_s(&script.params(), script.approach_s);
    let mut clock = 20.0;
    for c in 0..cases {
        let case = format!("case-{:02}", c + 1);
        let disturbed = c % 3 == 2;
        let count = if disturbed { 5 } else { 4 };
        for k in 0..count {
            let mut e = ScriptedEpisode::new(clock, rng.random_range(14.0..32.0), rng.random_range(2.0..5.5));
            e.case_ref = Some(case.clone());
            e.label = Some(if disturbed { "disturbance" } else { "basic" }.to_string());
            e.activity_ref = Some(format!("hh-{}", k + 1));
            clock += e.duration_s + spacing + rng.random_range(0.0..15.0);
            script.episodes.push(e);
        }
        clock += 60.0;
    }
    script
}

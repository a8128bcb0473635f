//! Fixtures shared by the benchmarks.

use emowave_core::datastore::{generate_synthetic, ClassEffect, SynthSpec};
use emowave_core::EegRecording;

/// One subject of synthetic trials with a clear valence effect.
pub fn subject(channels: usize, n_trials: u32, evoked_secs: usize) -> Vec<EegRecording> {
    let spec = SynthSpec {
        evoked_secs,
        noise_std: 1.0,
        class_effect: ClassEffect {
            valence: [0.0, 2.0, 0.0, 1.0],
            arousal: [2.0, 0.0, 1.0, 0.0],
        },
        ..SynthSpec::new(7, 1, n_trials, channels)
    };
    generate_synthetic(&spec).expect("valid fixture spec")
}

/// Deterministic pseudo-random signal.
pub fn signal(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

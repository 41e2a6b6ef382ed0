//! Shared inputs for the benchmarks.

use num_complex::Complex64;
use rdsense_core::sim::{apply_impairments, synthesize_channel};
use rdsense_core::{ChannelMatrix, ImpairmentSpec, RadioConfig, TargetState, TargetTrack};

/// A moving hand at 0.3 m with leakage, noise, a fractional timing offset
/// and phase drift, `frames` long on the default radio.
pub fn recording(frames: usize) -> (RadioConfig, ChannelMatrix) {
    let radio = RadioConfig::default();
    let v = 0.2;
    let track = TargetTrack {
        states: (0..frames)
            .map(|k| {
                let r = 0.3 - v * k as f64 * radio.frame_interval;
                TargetState::new(RadioConfig::range_to_delay(r), radio.velocity_to_doppler(v), 1.0)
            })
            .collect(),
        label_hint: None,
    };
    let imp = ImpairmentSpec {
        coupling_amplitude: Complex64::new(31.6, 0.0),
        noise_power: 1.0,
        timing_offset: 1.3,
        phase_drift_std: 0.01,
        rng_seed: 7,
    };
    let clean = synthesize_channel(&radio, &[track], &imp, frames).expect("valid recording");
    (radio, apply_impairments(&clean, &imp))
}

/// Deterministic pseudo-random clip values in [0, 1).
pub fn clip(len: usize, seed: u64) -> Vec<f32> {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 40) as f32 / (1u64 << 24) as f32
        })
        .collect()
}

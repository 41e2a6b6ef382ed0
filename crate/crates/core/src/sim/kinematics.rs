//! Kinematic realizations of the gesture classes and background movers.
//!
//! A gesture is a normalized displacement profile `d(s)` over `s ∈ [0, 1]`
//! plus an amplitude envelope `e(s)`. The hand range is
//! `R(t) = base_range + d(t / duration)` and the radial velocity is the
//! analytic derivative, so delay and Doppler are consistent by construction.
//!
//! Slide and Up-Down move mostly across the line of sight; their radial
//! component comes from the geometry `R = sqrt(R0² + x²)` and their main
//! signature is the beam-pattern amplitude envelope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{GestureKind, TargetState, TargetTrack};
use crate::error::{Error, Result};
use crate::radio::RadioConfig;

/// Shape parameters of the synthetic gestures. These are repository choices,
/// not measured hand kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Peak radial speed of Push & Pull (m/s).
    pub push_pull_speed: f64,
    /// Largest toward-the-device excursion of Push & Pull (m).
    pub push_pull_max_excursion: f64,
    /// Peak radial speed of Double Rotate (m/s).
    pub rotate_speed: f64,
    /// Peak radial speed of each Double Pulse push (m/s).
    pub pulse_speed: f64,
    /// Lateral half-width of Slide (m).
    pub slide_half_width: f64,
    /// Vertical half-height of Up-Down (m).
    pub updown_half_height: f64,
    /// Off-axis distance at which the reflected amplitude falls by 1/e (m).
    pub beam_width: f64,
    /// Closest allowed hand range (m).
    pub min_range: f64,
    /// Fraction of the gesture used for the smooth on/off taper of Double Rotate.
    pub taper: f64,
    /// Relative uniform jitter applied to excursion and amplitude per track.
    pub jitter: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        Self {
            push_pull_speed: 0.22,
            push_pull_max_excursion: 0.15,
            rotate_speed: 0.18,
            pulse_speed: 0.08,
            slide_half_width: 0.15,
            updown_half_height: 0.12,
            beam_width: 0.08,
            min_range: 0.04,
            taper: 0.15,
            jitter: 0.1,
        }
    }
}

impl KinematicsConfig {
    /// Upper bound on the radial hand speed of `kind` at `speed_scale`.
    pub fn peak_speed(&self, kind: GestureKind, speed_scale: f64) -> f64 {
        let j = 1.0 + self.jitter;
        let s = speed_scale.abs();
        match kind {
            GestureKind::PushPull => s * j * self.push_pull_speed,
            // |d/ds (sin(4πs)·w)| <= 4π + max|w'| with max|w'| = π/(2·taper)
            GestureKind::DoubleRotate => s * j * self.rotate_speed * (1.0 + 1.0 / (8.0 * self.taper)),
            GestureKind::DoublePulse => s * j * self.pulse_speed,
            // radial rate is bounded by the lateral speed
            GestureKind::Slide | GestureKind::UpDown => f64::INFINITY,
        }
    }
}

/// Amplitude law of background movers: `body_gain · (reference_range / R)²`
/// relative to a unit hand reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoverConfig {
    pub body_gain: f64,
    pub reference_range: f64,
}

impl Default for MoverConfig {
    fn default() -> Self {
        Self {
            body_gain: 5.0,
            reference_range: 0.2,
        }
    }
}

impl MoverConfig {
    pub fn amplitude_at(&self, range: f64) -> f64 {
        self.body_gain * (self.reference_range / range).powi(2)
    }
}

fn smooth_taper(s: f64, rho: f64) -> (f64, f64) {
    let k = PI / (2.0 * rho);
    if s < rho {
        ((k * s).sin().powi(2), k * (2.0 * k * s).sin())
    } else if s > 1.0 - rho {
        let u = 1.0 - s;
        ((k * u).sin().powi(2), -k * (2.0 * k * u).sin())
    } else {
        (1.0, 0.0)
    }
}

struct Profile {
    /// Radial displacement (m).
    disp: f64,
    /// d(disp)/ds (m per unit s).
    rate: f64,
    envelope: f64,
}

struct Shape {
    kind: GestureKind,
    base: f64,
    scale: f64,
    duration: f64,
    excursion: f64,
    beam_width: f64,
    taper: f64,
}

impl Shape {
    fn eval(&self, s: f64) -> Profile {
        let k = self.scale;
        match self.kind {
            GestureKind::PushPull => {
                let a = self.excursion;
                Profile {
                    disp: -a * (PI * s).sin().powi(2),
                    rate: -a * PI * (2.0 * PI * s).sin(),
                    envelope: 1.0,
                }
            }
            GestureKind::DoubleRotate => {
                let r = self.excursion;
                let (w, dw) = smooth_taper(s, self.taper);
                let (sn, cs) = (4.0 * PI * s).sin_cos();
                Profile {
                    disp: r * sn * w,
                    rate: r * (4.0 * PI * cs * w + sn * dw),
                    envelope: 1.0,
                }
            }
            GestureKind::DoublePulse => {
                let p = self.excursion;
                let burst = (2.0 * PI * s).sin().powi(4);
                Profile {
                    disp: -p * (2.0 * PI * s).sin().powi(2),
                    rate: -2.0 * PI * p * (4.0 * PI * s).sin(),
                    envelope: 0.5 + 1.5 * burst,
                }
            }
            GestureKind::Slide => {
                let x = -k * self.excursion * (PI * s).cos();
                let dx = k * self.excursion * PI * (PI * s).sin();
                self.lateral(x, dx)
            }
            GestureKind::UpDown => {
                let z = k * self.excursion * (2.0 * PI * s).sin();
                let dz = k * self.excursion * 2.0 * PI * (2.0 * PI * s).cos();
                self.lateral(z, dz)
            }
        }
    }

    fn lateral(&self, x: f64, dx: f64) -> Profile {
        let r = (self.base * self.base + x * x).sqrt();
        Profile {
            disp: r - self.base,
            rate: x * dx / r,
            envelope: 0.35 + 0.9 * (-(x / self.beam_width).powi(2)).exp(),
        }
    }
}

/// Generates the per-frame states of one gesture of length `duration`.
pub fn gesture_track(
    kind: GestureKind,
    base_range: f64,
    speed_scale: f64,
    duration: f64,
    cfg: &RadioConfig,
    rng_seed: u64,
) -> Result<TargetTrack> {
    gesture_track_with(
        &KinematicsConfig::default(),
        kind,
        base_range,
        speed_scale,
        duration,
        cfg,
        rng_seed,
    )
}

pub fn gesture_track_with(
    kin: &KinematicsConfig,
    kind: GestureKind,
    base_range: f64,
    speed_scale: f64,
    duration: f64,
    cfg: &RadioConfig,
    rng_seed: u64,
) -> Result<TargetTrack> {
    cfg.validate()?;
    if !(base_range > 0.0) {
        return Err(Error::Config(format!("base_range must be > 0, got {base_range}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Config(format!("duration must be > 0, got {duration}")));
    }
    if !(speed_scale >= 0.0) {
        return Err(Error::Config(format!(
            "speed_scale must be >= 0, got {speed_scale}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let j = kin.jitter;
    let exc_jitter = 1.0 + rng.gen_range(-j..=j);
    let amp_jitter = 1.0 + rng.gen_range(-j..=j);

    let room = (base_range - kin.min_range).max(0.0);
    let excursion = match kind {
        GestureKind::PushPull => (speed_scale * exc_jitter * kin.push_pull_speed * duration / PI)
            .min(speed_scale * kin.push_pull_max_excursion)
            .min(room),
        GestureKind::DoubleRotate => {
            (speed_scale * exc_jitter * kin.rotate_speed * duration / (4.0 * PI)).min(room)
        }
        GestureKind::DoublePulse => {
            (speed_scale * exc_jitter * kin.pulse_speed * duration / (2.0 * PI)).min(room)
        }
        GestureKind::Slide => exc_jitter * kin.slide_half_width,
        GestureKind::UpDown => exc_jitter * kin.updown_half_height,
    };
    let shape = Shape {
        kind,
        base: base_range,
        scale: speed_scale,
        duration,
        excursion,
        beam_width: kin.beam_width,
        taper: kin.taper,
    };

    let frames = ((duration / cfg.frame_interval).round() as usize).max(2);
    let states = (0..frames)
        .map(|m| {
            let s = (m as f64 * cfg.frame_interval / shape.duration).min(1.0);
            let p = shape.eval(s);
            let range = base_range + p.disp;
            let velocity = p.rate / shape.duration;
            TargetState::new(
                RadioConfig::range_to_delay(range),
                cfg.velocity_to_doppler(velocity),
                amp_jitter * p.envelope,
            )
        })
        .collect();
    Ok(TargetTrack {
        states,
        label_hint: Some(kind),
    })
}

/// Constant-velocity body at `range_m` with the default amplitude law.
pub fn background_mover_track(
    range_m: f64,
    velocity: f64,
    duration: f64,
    cfg: &RadioConfig,
) -> Result<TargetTrack> {
    background_mover_track_with(&MoverConfig::default(), range_m, velocity, duration, cfg)
}

pub fn background_mover_track_with(
    mover: &MoverConfig,
    range_m: f64,
    velocity: f64,
    duration: f64,
    cfg: &RadioConfig,
) -> Result<TargetTrack> {
    cfg.validate()?;
    if !(range_m > 0.0) {
        return Err(Error::Config(format!("mover range must be > 0, got {range_m}")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Config(format!("duration must be > 0, got {duration}")));
    }
    let frames = ((duration / cfg.frame_interval).round() as usize).max(1);
    let end = range_m + velocity * (frames - 1) as f64 * cfg.frame_interval;
    if end <= 0.0 {
        return Err(Error::Config(format!(
            "mover at {range_m} m with {velocity} m/s reaches the device"
        )));
    }
    let amplitude = mover.amplitude_at(range_m);
    let doppler = cfg.velocity_to_doppler(velocity);
    let states = (0..frames)
        .map(|m| {
            let r = range_m + velocity * m as f64 * cfg.frame_interval;
            TargetState::new(RadioConfig::range_to_delay(r), doppler, amplitude)
        })
        .collect();
    Ok(TargetTrack {
        states,
        label_hint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::SPEED_OF_LIGHT;
    use proptest::prelude::*;

    fn sign_changes(xs: &[f64]) -> usize {
        let mut last = 0.0f64;
        let mut n = 0;
        for &x in xs {
            if x != 0.0 {
                if last != 0.0 && x.signum() != last.signum() {
                    n += 1;
                }
                last = x;
            }
        }
        n
    }

    fn kinematic_residual(track: &TargetTrack, cfg: &RadioConfig) -> f64 {
        let lambda = cfg.wavelength();
        track
            .states
            .windows(2)
            .map(|w| {
                let dr = (w[1].delay - w[0].delay) * SPEED_OF_LIGHT / 2.0;
                let predicted = -(w[0].doppler + w[1].doppler) * lambda / 4.0 * cfg.frame_interval;
                (dr - predicted).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn push_pull_respects_peak_speed() {
        let cfg = RadioConfig::default();
        let kin = KinematicsConfig::default();
        let t = gesture_track(GestureKind::PushPull, 0.20, 1.0, 3.2, &cfg, 1).unwrap();
        // numerical derivative of the generated range
        let ranges = t.ranges();
        let v_num = ranges
            .windows(2)
            .map(|w| ((w[1] - w[0]) / cfg.frame_interval).abs())
            .fold(0.0, f64::max);
        let v_max = kin.peak_speed(GestureKind::PushPull, 1.0);
        assert!(v_num <= v_max * 1.001, "{v_num} > {v_max}");
        let fd_max = t.states.iter().map(|s| s.doppler.abs()).fold(0.0, f64::max);
        assert!(fd_max <= 2.0 * v_max / cfg.wavelength());
    }

    #[test]
    fn zero_speed_is_static() {
        let cfg = RadioConfig::default();
        for kind in GestureKind::ALL {
            let t = gesture_track(kind, 0.25, 0.0, 2.0, &cfg, 7).unwrap();
            let d0 = t.states[0].delay;
            assert!(
                t.states.iter().all(|s| s.delay == d0 && s.doppler == 0.0),
                "{kind}"
            );
        }
    }

    #[test]
    fn double_rotate_crosses_zero_four_times() {
        let cfg = RadioConfig::default();
        let t = gesture_track(GestureKind::DoubleRotate, 0.25, 1.0, 2.4, &cfg, 3).unwrap();
        let fd: Vec<f64> = t.states.iter().map(|s| s.doppler).collect();
        assert!(sign_changes(&fd) >= 4, "{}", sign_changes(&fd));
    }

    #[test]
    fn mover_closed_form() {
        let cfg = RadioConfig::default();
        let t = background_mover_track(1.5, 0.3, 1.0, &cfg).unwrap();
        assert!((t.states[0].delay - 10.007e-9).abs() < 1e-12);
        assert!(
            (t.states[0].doppler + 12.70).abs() < 0.01,
            "{}",
            t.states[0].doppler
        );
        let still = background_mover_track(1.5, 0.0, 1.0, &cfg).unwrap();
        assert!(still
            .states
            .iter()
            .all(|s| s.doppler == 0.0 && s.delay == still.states[0].delay));
        assert!(background_mover_track(0.0, 0.1, 1.0, &cfg).is_err());
        assert!(background_mover_track(0.2, -0.5, 1.0, &cfg).is_err());
    }

    #[test]
    fn rejects_bad_arguments() {
        let cfg = RadioConfig::default();
        assert!(gesture_track(GestureKind::Slide, 0.0, 1.0, 2.0, &cfg, 0).is_err());
        assert!(gesture_track(GestureKind::Slide, 0.2, 1.0, 0.0, &cfg, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tracks_are_kinematically_consistent(
            kind in 0usize..5,
            base in 0.08f64..0.6,
            scale in 0.0f64..1.5,
            duration in 1.5f64..3.2,
            seed in any::<u64>(),
        ) {
            let cfg = RadioConfig::default();
            let kind = GestureKind::ALL[kind];
            let t = gesture_track(kind, base, scale, duration, &cfg, seed).unwrap();
            prop_assert!(kinematic_residual(&t, &cfg) <= 1e-3);
            prop_assert!(t.ranges().iter().all(|&r| r > 0.0));
        }
    }
}

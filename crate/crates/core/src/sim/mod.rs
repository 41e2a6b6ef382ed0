//! Frequency-domain channel synthesis for point scatterers.
//!
//! Every frame `m` and subcarrier `n` of the LTF channel matrix is
//!
//! ```text
//! D(m,n) = Σ_k a_k(m)·exp(jφ_k(m))·exp(−j2π·n·Δf·τ_k(m)) + c + η(m,n)
//! ```
//!
//! where `φ_k(m) = 2πT·Σ_{i<m} (f_D,k(i) + f_D,k(i+1))/2` is the Doppler
//! phase integrated with the trapezoid rule (equal to `2πT·m·f_D` for a
//! constant Doppler), `c` is the frame-constant
//! Tx–Rx leakage and `η` is circular complex white Gaussian noise.

mod kinematics;
pub mod scenario;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::radio::RadioConfig;

pub use kinematics::{
    background_mover_track, background_mover_track_with, gesture_track, gesture_track_with, KinematicsConfig,
    MoverConfig,
};

const NOISE_STREAM: u64 = 0;
const DRIFT_STREAM: u64 = 1;

/// The five gesture classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureKind {
    PushPull,
    Slide,
    UpDown,
    DoublePulse,
    DoubleRotate,
}

impl GestureKind {
    pub const ALL: [GestureKind; 5] = [
        GestureKind::PushPull,
        GestureKind::Slide,
        GestureKind::UpDown,
        GestureKind::DoublePulse,
        GestureKind::DoubleRotate,
    ];

    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::UnknownId(format!("gesture index {i}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureKind::PushPull => "PushPull",
            GestureKind::Slide => "Slide",
            GestureKind::UpDown => "UpDown",
            GestureKind::DoublePulse => "DoublePulse",
            GestureKind::DoubleRotate => "DoubleRotate",
        }
    }
}

impl std::str::FromStr for GestureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "pushpull" => Ok(GestureKind::PushPull),
            "slide" => Ok(GestureKind::Slide),
            "updown" => Ok(GestureKind::UpDown),
            "doublepulse" | "pulse" => Ok(GestureKind::DoublePulse),
            "doublerotate" | "rotate" => Ok(GestureKind::DoubleRotate),
            _ => Err(Error::UnknownId(format!("gesture kind {s:?}"))),
        }
    }
}

impl std::fmt::Display for GestureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Instantaneous state of one point scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    /// Round-trip delay τ (s).
    pub delay: f64,
    /// Doppler shift f_D (Hz).
    pub doppler: f64,
    pub amplitude: Complex64,
}

impl TargetState {
    pub fn new(delay: f64, doppler: f64, amplitude: f64) -> Self {
        Self {
            delay,
            doppler,
            amplitude: Complex64::new(amplitude, 0.0),
        }
    }
}

/// Per-frame states of one scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTrack {
    pub states: Vec<TargetState>,
    pub label_hint: Option<GestureKind>,
}

impl TargetTrack {
    pub fn constant(state: TargetState, frames: usize) -> Self {
        Self {
            states: vec![state; frames],
            label_hint: None,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn scaled(mut self, gain: f64) -> Self {
        for s in &mut self.states {
            s.amplitude *= gain;
        }
        self
    }

    /// Embeds the track at `start` inside a stream of `total` frames. Frames
    /// before and after hold the first and last state with zero Doppler.
    pub fn placed(&self, start: usize, total: usize) -> Result<Self> {
        if self.states.is_empty() {
            return Err(Error::Config("cannot place an empty track".into()));
        }
        if start + self.states.len() > total {
            return Err(Error::Config(format!(
                "track of {} frames starting at {start} overruns a {total}-frame stream",
                self.states.len()
            )));
        }
        let first = TargetState {
            doppler: 0.0,
            ..self.states[0]
        };
        let last = TargetState {
            doppler: 0.0,
            ..*self.states.last().unwrap()
        };
        let mut states = Vec::with_capacity(total);
        states.extend(std::iter::repeat_n(first, start));
        states.extend_from_slice(&self.states);
        states.resize(total, last);
        Ok(Self {
            states,
            label_hint: self.label_hint,
        })
    }

    /// Range in metres at every frame.
    pub fn ranges(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| RadioConfig::delay_to_range(s.delay))
            .collect()
    }
}

/// Hardware impairments and noise applied on top of the ideal channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentSpec {
    /// Frame-constant Tx–Rx leakage added to every cell.
    pub coupling_amplitude: Complex64,
    /// Variance of the complex AWGN term.
    pub noise_power: f64,
    /// Global timing offset in LTF samples (1/B); may be fractional.
    pub timing_offset: f64,
    /// Standard deviation of the per-frame common-phase random-walk step (rad).
    pub phase_drift_std: f64,
    pub rng_seed: u64,
}

impl Default for ImpairmentSpec {
    fn default() -> Self {
        Self {
            coupling_amplitude: Complex64::new(0.0, 0.0),
            noise_power: 0.0,
            timing_offset: 0.0,
            phase_drift_std: 0.0,
            rng_seed: 0,
        }
    }
}

impl ImpairmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_power >= 0.0) {
            return Err(Error::Config("noise_power must be >= 0".into()));
        }
        if !(self.phase_drift_std >= 0.0) {
            return Err(Error::Config("phase_drift_std must be >= 0".into()));
        }
        if !self.timing_offset.is_finite() {
            return Err(Error::Config("timing_offset must be finite".into()));
        }
        Ok(())
    }
}

/// M×N complex channel matrix, row-major over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    frames: usize,
    subcarriers: usize,
    data: Vec<Complex64>,
    /// Set when some synthesized Doppler exceeded the unambiguous ±1/(2T).
    pub doppler_aliased: bool,
}

impl ChannelMatrix {
    pub fn zeros(frames: usize, subcarriers: usize) -> Self {
        Self::filled(frames, subcarriers, Complex64::new(0.0, 0.0))
    }

    pub fn filled(frames: usize, subcarriers: usize, value: Complex64) -> Self {
        Self {
            frames,
            subcarriers,
            data: vec![value; frames * subcarriers],
            doppler_aliased: false,
        }
    }

    pub fn from_vec(frames: usize, subcarriers: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != frames * subcarriers {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{subcarriers} matrix",
                data.len()
            )));
        }
        Ok(Self {
            frames,
            subcarriers,
            data,
            doppler_aliased: false,
        })
    }

    pub fn from_fn(frames: usize, subcarriers: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(frames * subcarriers);
        for m in 0..frames {
            for n in 0..subcarriers {
                data.push(f(m, n));
            }
        }
        Self {
            frames,
            subcarriers,
            data,
            doppler_aliased: false,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.data[m * self.subcarriers + n]
    }

    pub fn row(&self, m: usize) -> &[Complex64] {
        &self.data[m * self.subcarriers..(m + 1) * self.subcarriers]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [Complex64] {
        &mut self.data[m * self.subcarriers..(m + 1) * self.subcarriers]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.data.chunks_exact(self.subcarriers.max(1))
    }

    /// Copy of frames `start..start + len`.
    pub fn frame_slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames {
            return Err(Error::Shape(format!(
                "frames {start}..{} out of {}",
                start + len,
                self.frames
            )));
        }
        let lo = start * self.subcarriers;
        let hi = (start + len) * self.subcarriers;
        Ok(Self {
            frames: len,
            subcarriers: self.subcarriers,
            data: self.data[lo..hi].to_vec(),
            doppler_aliased: self.doppler_aliased,
        })
    }

    /// Temporal mean of every subcarrier.
    pub fn subcarrier_means(&self) -> Vec<Complex64> {
        running_mean(&self.data, self.subcarriers)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Add for &ChannelMatrix {
    type Output = ChannelMatrix;

    fn add(self, rhs: &ChannelMatrix) -> ChannelMatrix {
        assert_eq!((self.frames, self.subcarriers), (rhs.frames, rhs.subcarriers));
        ChannelMatrix {
            frames: self.frames,
            subcarriers: self.subcarriers,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
            doppler_aliased: self.doppler_aliased || rhs.doppler_aliased,
        }
    }
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one circular complex Gaussian sample of the given variance.
pub(crate) fn complex_gaussian<R: rand::Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Synthesizes the LTF channel matrix of `tracks` plus leakage and noise.
///
/// Timing offset and phase drift are not applied here; see
/// [`apply_impairments`].
pub fn synthesize_channel(
    cfg: &RadioConfig,
    tracks: &[TargetTrack],
    imp: &ImpairmentSpec,
    num_frames: usize,
) -> Result<ChannelMatrix> {
    cfg.validate()?;
    imp.validate()?;
    for (index, t) in tracks.iter().enumerate() {
        if t.len() != num_frames {
            return Err(Error::TrackLength {
                index,
                expected: num_frames,
                found: t.len(),
            });
        }
    }

    let n_sc = cfg.num_subcarriers;
    let spacing = cfg.subcarrier_spacing();
    let t_frame = cfg.frame_interval;
    let mut out = ChannelMatrix::filled(num_frames, n_sc, imp.coupling_amplitude);

    let f_max = cfg.max_doppler();
    for track in tracks {
        let mut doppler_sum = 0.0;
        for (m, state) in track.states.iter().enumerate() {
            if state.doppler.abs() >= f_max {
                out.doppler_aliased = true;
            }
            let slow = state.amplitude * Complex64::cis(2.0 * PI * t_frame * doppler_sum);
            let fast = -2.0 * PI * spacing * state.delay;
            for (n, d) in out.row_mut(m).iter_mut().enumerate() {
                *d += slow * Complex64::cis(fast * n as f64);
            }
            // trapezoidal phase accumulation; exact for linear Doppler ramps
            let next = track.states.get(m + 1).map_or(state.doppler, |s| s.doppler);
            doppler_sum += 0.5 * (state.doppler + next);
        }
    }
    if out.doppler_aliased {
        log::warn!("synthesized Doppler exceeds the unambiguous span ±{f_max} Hz");
    }

    if imp.noise_power > 0.0 {
        let mut rng = seeded(imp.rng_seed, NOISE_STREAM);
        for d in out.data.iter_mut() {
            *d += complex_gaussian(&mut rng, imp.noise_power);
        }
    }
    Ok(out)
}

/// Applies the global timing offset (a linear phase ramp over subcarriers) and
/// the per-frame random-walk common phase.
pub fn apply_impairments(d: &ChannelMatrix, imp: &ImpairmentSpec) -> ChannelMatrix {
    let mut out = d.clone();
    if imp.timing_offset == 0.0 && imp.phase_drift_std == 0.0 {
        return out;
    }
    let n_sc = d.subcarriers as f64;
    let ramp: Vec<Complex64> = (0..d.subcarriers)
        .map(|n| Complex64::cis(-2.0 * PI * n as f64 * imp.timing_offset / n_sc))
        .collect();

    let mut rng = seeded(imp.rng_seed, DRIFT_STREAM);
    let mut psi = 0.0;
    for m in 0..d.frames {
        if m > 0 && imp.phase_drift_std > 0.0 {
            let step: f64 = StandardNormal.sample(&mut rng);
            psi += imp.phase_drift_std * step;
        }
        let common = Complex64::cis(psi);
        for (v, r) in out.row_mut(m).iter_mut().zip(&ramp) {
            *v *= r * common;
        }
    }
    out
}

/// Column means of a row-major block with `cols` columns, accumulated as
/// `μ += (x − μ) / k`. Unlike sum-then-divide this returns a constant column
/// bit-exactly, so mean subtraction cancels frame-constant input to zero.
pub(crate) fn running_mean(block: &[Complex64], cols: usize) -> Vec<Complex64> {
    let mut mean = vec![Complex64::new(0.0, 0.0); cols];
    for (k, row) in block.chunks_exact(cols).enumerate() {
        let inv = 1.0 / (k + 1) as f64;
        for (m, v) in mean.iter_mut().zip(row) {
            *m += (v - *m) * inv;
        }
    }
    mean
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n: usize) -> RadioConfig {
        RadioConfig {
            num_subcarriers: n,
            ..Default::default()
        }
    }

    /// Brute-force 2D DFT magnitude: rows are Doppler bins, columns delay bins.
    fn dft2_mag(d: &ChannelMatrix) -> Vec<Vec<f64>> {
        let (mm, nn) = (d.frames(), d.subcarriers());
        let mut out = vec![vec![0.0; nn]; mm];
        for (p, row) in out.iter_mut().enumerate() {
            for (q, cell) in row.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..mm {
                    for n in 0..nn {
                        let ph =
                            -2.0 * PI * (p * m) as f64 / mm as f64 + 2.0 * PI * (q * n) as f64 / nn as f64;
                        acc += d.get(m, n) * Complex64::cis(ph);
                    }
                }
                *cell = acc.norm();
            }
        }
        out
    }

    fn argmax2(grid: &[Vec<f64>]) -> ((usize, usize), usize) {
        let mut best = (0, 0);
        let mut v = f64::MIN;
        for (i, r) in grid.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                if x > v {
                    v = x;
                    best = (i, j);
                }
            }
        }
        let ties = grid
            .iter()
            .flatten()
            .filter(|&&x| (x - v).abs() < 1e-9 * v)
            .count();
        (best, ties)
    }

    #[test]
    fn static_unit_target_is_all_ones() {
        let cfg = small_cfg(8);
        let track = TargetTrack::constant(TargetState::new(0.0, 0.0, 1.0), 8);
        let d = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), 8).unwrap();
        assert!(d.data().iter().all(|&v| v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn coupling_only() {
        let cfg = small_cfg(8);
        let c = Complex64::new(0.3, -2.0);
        let imp = ImpairmentSpec {
            coupling_amplitude: c,
            ..Default::default()
        };
        let d = synthesize_channel(&cfg, &[], &imp, 8).unwrap();
        assert!(d.data().iter().all(|&v| v == c));
    }

    #[test]
    fn one_bin_target_peaks_at_bin_one_one() {
        let cfg = small_cfg(8);
        let m = 8;
        let f_d = 1.0 / (m as f64 * cfg.frame_interval);
        let tau = 1.0 / (8.0 * cfg.subcarrier_spacing());
        let track = TargetTrack::constant(TargetState::new(tau, f_d, 1.0), m);
        let d = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), m).unwrap();
        let spec = dft2_mag(&d);
        let ((p, q), ties) = argmax2(&spec);
        assert_eq!((p, q), (1, 1));
        assert_eq!(ties, 1);
    }

    #[test]
    fn rejects_mismatched_track() {
        let cfg = small_cfg(8);
        let track = TargetTrack::constant(TargetState::new(0.0, 0.0, 1.0), 7);
        let err = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), 8).unwrap_err();
        assert!(matches!(err, Error::TrackLength { found: 7, .. }));
    }

    #[test]
    fn flags_aliased_doppler() {
        let cfg = small_cfg(8);
        let track = TargetTrack::constant(TargetState::new(0.0, 25.0, 1.0), 4);
        let d = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), 4).unwrap();
        assert!(d.doppler_aliased);
    }

    #[test]
    fn identity_impairment_is_bitwise() {
        let cfg = small_cfg(16);
        let track = TargetTrack::constant(TargetState::new(3e-9, 4.0, 0.7), 10);
        let imp = ImpairmentSpec {
            noise_power: 0.1,
            rng_seed: 3,
            ..Default::default()
        };
        let d = synthesize_channel(&cfg, &[track], &imp, 10).unwrap();
        assert_eq!(apply_impairments(&d, &imp), d);
    }

    #[test]
    fn one_sample_offset_shifts_one_delay_bin() {
        let cfg = small_cfg(16);
        let tau = 3.0 / (16.0 * cfg.subcarrier_spacing());
        let f_d = 2.0 / (8.0 * cfg.frame_interval);
        let track = TargetTrack::constant(TargetState::new(tau, f_d, 1.0), 8);
        let d = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), 8).unwrap();
        let shifted = apply_impairments(
            &d,
            &ImpairmentSpec {
                timing_offset: 1.0,
                ..Default::default()
            },
        );
        let (before, _) = argmax2(&dft2_mag(&d));
        let (after, _) = argmax2(&dft2_mag(&shifted));
        assert_eq!(before, (2, 3));
        assert_eq!(after, (2, 4));
    }

    #[test]
    fn phase_drift_spreads_zero_doppler_energy() {
        let cfg = small_cfg(8);
        let m = 32;
        let track = TargetTrack::constant(TargetState::new(0.0, 0.0, 1.0), m);
        let d = synthesize_channel(&cfg, &[track], &ImpairmentSpec::default(), m).unwrap();
        let drifted = apply_impairments(
            &d,
            &ImpairmentSpec {
                phase_drift_std: 0.3,
                rng_seed: 11,
                ..Default::default()
            },
        );
        let ratio = |x: &ChannelMatrix| {
            let s = dft2_mag(x);
            let total: f64 = s.iter().flatten().map(|v| v * v).sum();
            s[0][0] * s[0][0] / total
        };
        assert!((ratio(&d) - 1.0).abs() < 1e-9);
        assert!(ratio(&drifted) < 0.95);
    }

    #[test]
    fn linearity_over_track_sets() {
        let cfg = small_cfg(32);
        let m = 12;
        let a = TargetTrack::constant(TargetState::new(2e-9, 3.0, 0.8), m);
        let b = TargetTrack::constant(TargetState::new(7e-9, -5.5, 1.3), m);
        let c = Complex64::new(4.0, 1.0);
        let imp = ImpairmentSpec {
            coupling_amplitude: c,
            rng_seed: 9,
            ..Default::default()
        };
        let both = synthesize_channel(&cfg, &[a.clone(), b.clone()], &imp, m).unwrap();
        let da = synthesize_channel(&cfg, &[a], &imp, m).unwrap();
        let db = synthesize_channel(&cfg, &[b], &imp, m).unwrap();
        for ((x, y), z) in both.data().iter().zip(da.data()).zip(db.data()) {
            let sum = y + z - c;
            assert!((x - sum).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = small_cfg(64);
        let track = TargetTrack::constant(TargetState::new(1e-9, 2.0, 1.0), 20);
        let imp = ImpairmentSpec {
            noise_power: 0.5,
            phase_drift_std: 0.1,
            timing_offset: 0.3,
            rng_seed: 42,
            ..Default::default()
        };
        let run = || {
            apply_impairments(
                &synthesize_channel(&cfg, std::slice::from_ref(&track), &imp, 20).unwrap(),
                &imp,
            )
        };
        let (x, y) = (run(), run());
        assert!(x
            .data()
            .iter()
            .zip(y.data())
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn noise_energy_matches_variance() {
        let cfg = small_cfg(64);
        let sigma2 = 0.37;
        let imp = ImpairmentSpec {
            noise_power: sigma2,
            rng_seed: 5,
            ..Default::default()
        };
        let d = synthesize_channel(&cfg, &[], &imp, 64).unwrap();
        let mean: f64 = d.data().iter().map(|v| v.norm_sqr()).sum::<f64>() / d.data().len() as f64;
        assert!((mean / sigma2 - 1.0).abs() < 0.05, "mean power {mean}");
    }

    #[test]
    fn placed_track_holds_edges() {
        let t = TargetTrack {
            states: vec![TargetState::new(1e-9, 3.0, 1.0), TargetState::new(2e-9, 4.0, 2.0)],
            label_hint: Some(GestureKind::Slide),
        };
        let p = t.placed(2, 6).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.states[0].doppler, 0.0);
        assert_eq!(p.states[0].delay, 1e-9);
        assert_eq!(p.states[3], t.states[1]);
        assert_eq!(p.states[5].amplitude.re, 2.0);
        assert!(t.placed(5, 6).is_err());
    }

    #[test]
    fn gesture_names_round_trip() {
        for g in GestureKind::ALL {
            assert_eq!(g.name().parse::<GestureKind>().unwrap(), g);
            assert_eq!(GestureKind::from_index(g.index()).unwrap(), g);
        }
        assert!("wave".parse::<GestureKind>().is_err());
    }
}

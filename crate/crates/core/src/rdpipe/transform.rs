use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use super::{DopplerWindow, RDGrid, RDMap};
use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::sim::ChannelMatrix;

/// Dense-grid delay transform `Y(r) = N^{-1/2} Σ_n D(n)·exp(j2π n Δf τ_r)`
/// evaluated directly at the requested ranges.
#[derive(Debug, Clone)]
pub struct RangeTransform {
    subcarriers: usize,
    gates: usize,
    steering: Vec<Complex64>,
}

impl RangeTransform {
    pub fn new(radio: &RadioConfig, ranges: &[f64]) -> Self {
        let n_sc = radio.num_subcarriers;
        let spacing = radio.subcarrier_spacing();
        let scale = 1.0 / (n_sc as f64).sqrt();
        let mut steering = Vec::with_capacity(ranges.len() * n_sc);
        for &r in ranges {
            let w = 2.0 * PI * spacing * RadioConfig::range_to_delay(r);
            steering.extend((0..n_sc).map(|n| Complex64::from_polar(scale, w * n as f64)));
        }
        Self {
            subcarriers: n_sc,
            gates: ranges.len(),
            steering,
        }
    }

    pub fn for_grid(radio: &RadioConfig, grid: &RDGrid) -> Self {
        Self::new(radio, &grid.ranges())
    }

    pub fn gates(&self) -> usize {
        self.gates
    }

    pub fn apply_into(&self, row: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(row.len(), self.subcarriers);
        for (o, s) in out.iter_mut().zip(self.steering.chunks_exact(self.subcarriers)) {
            *o = s.iter().zip(row).map(|(a, b)| a * b).sum();
        }
    }

    /// Transforms every frame; the result is frames × gates.
    pub fn apply(&self, d: &ChannelMatrix) -> Result<Vec<Complex64>> {
        if d.subcarriers() != self.subcarriers {
            return Err(Error::Shape(format!(
                "matrix has {} subcarriers, transform expects {}",
                d.subcarriers(),
                self.subcarriers
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); d.frames() * self.gates];
        for (m, chunk) in out.chunks_exact_mut(self.gates).enumerate() {
            self.apply_into(d.row(m), chunk);
        }
        Ok(out)
    }
}

/// Slow-time transform `X(v) = Σ_m w_m x_m·exp(−j2π f_v T m)` with
/// `f_v = −2v/λ`, evaluated directly on the velocity cells. For the
/// rectangular window `w_m = M^{-1/2}`; the Hann taper is scaled to the same
/// noise gain.
#[derive(Debug, Clone)]
pub struct DopplerTransform {
    frames: usize,
    cells: usize,
    kernel: Vec<Complex64>,
}

impl DopplerTransform {
    pub fn new(radio: &RadioConfig, velocities: &[f64], frames: usize, window: DopplerWindow) -> Self {
        let weights = window_weights(window, frames);
        let lambda = radio.wavelength();
        let t = radio.frame_interval;
        let mut kernel = Vec::with_capacity(velocities.len() * frames);
        for &v in velocities {
            let f = -2.0 * v / lambda;
            kernel
                .extend((0..frames).map(|m| Complex64::from_polar(weights[m], -2.0 * PI * f * t * m as f64)));
        }
        Self {
            frames,
            cells: velocities.len(),
            kernel,
        }
    }

    pub fn for_grid(radio: &RadioConfig, grid: &RDGrid) -> Self {
        Self::new(radio, &grid.velocities(), grid.cpi_frames, grid.doppler_window)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Power of every velocity cell for gate `g` of a frames × gates block,
    /// added into `out`.
    pub fn accumulate_power(&self, block: &[Complex64], gates: usize, g: usize, out: &mut [f64], gain: f64) {
        for (o, k) in out.iter_mut().zip(self.kernel.chunks_exact(self.frames)) {
            let x: Complex64 = k.iter().enumerate().map(|(m, w)| w * block[m * gates + g]).sum();
            *o += gain * x.norm_sqr();
        }
    }
}

fn window_weights(window: DopplerWindow, m: usize) -> Vec<f64> {
    match window {
        DopplerWindow::Rectangular => vec![1.0 / (m as f64).sqrt(); m],
        DopplerWindow::Hann => {
            let w: Vec<f64> = (0..m)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / m as f64).cos())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.into_iter().map(|x| x / norm).collect()
        }
    }
}

/// Native M-point unitary Doppler power spectrum of one gate's slow-time
/// series.
pub fn doppler_spectrum(series: &[Complex64]) -> Vec<f64> {
    let mut buf = series.to_vec();
    FftPlanner::<f64>::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    let s = 1.0 / series.len() as f64;
    buf.iter().map(|x| x.norm_sqr() * s).collect()
}

/// Linear RD power on the grid (range-major) from a frames × gates block of
/// range-transformed frames.
pub(crate) fn block_power(block: &[Complex64], gates: usize, doppler: &DopplerTransform) -> Vec<f64> {
    let mut power = vec![0.0; gates * doppler.cells()];
    for (g, row) in power.chunks_exact_mut(doppler.cells()).enumerate() {
        doppler.accumulate_power(block, gates, g, row, 1.0);
    }
    power
}

/// Linear RD power of one CPI of `grid.cpi_frames` frames.
pub fn rd_power(d: &ChannelMatrix, radio: &RadioConfig, grid: &RDGrid) -> Result<Vec<f64>> {
    grid.validate()?;
    if d.frames() != grid.cpi_frames {
        return Err(Error::Shape(format!(
            "CPI has {} frames, grid expects {}",
            d.frames(),
            grid.cpi_frames
        )));
    }
    let range = RangeTransform::for_grid(radio, grid);
    let block = range.apply(d)?;
    Ok(block_power(
        &block,
        range.gates(),
        &DopplerTransform::for_grid(radio, grid),
    ))
}

/// Zoomed RD map of one CPI in dB relative to the median noise floor.
pub fn rd_map(d: &ChannelMatrix, radio: &RadioConfig, grid: &RDGrid) -> Result<RDMap> {
    let power = rd_power(d, radio, grid)?;
    let aliased = grid.aliased(radio);
    if aliased {
        log::warn!(
            "velocity span {} exceeds ±{}",
            grid.velocity_span,
            radio.max_velocity()
        );
    }
    RDMap::from_power(&power, grid.num_ranges(), grid.num_velocities(), 0.0, aliased)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{complex_gaussian, synthesize_channel, ImpairmentSpec, TargetState, TargetTrack};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn target(radio: &RadioConfig, r: f64, v: f64, frames: usize) -> ChannelMatrix {
        let s = TargetState::new(RadioConfig::range_to_delay(r), radio.velocity_to_doppler(v), 1.0);
        synthesize_channel(
            radio,
            &[TargetTrack::constant(s, frames)],
            &ImpairmentSpec::default(),
            frames,
        )
        .unwrap()
    }

    /// Direct quadruple sum at one (range, velocity) point.
    fn brute_power(d: &ChannelMatrix, radio: &RadioConfig, r: f64, v: f64) -> f64 {
        let tau = RadioConfig::range_to_delay(r);
        let f = -2.0 * v / radio.wavelength();
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..d.frames() {
            for n in 0..d.subcarriers() {
                let ph = 2.0
                    * PI
                    * (n as f64 * radio.subcarrier_spacing() * tau - f * radio.frame_interval * m as f64);
                acc += d.get(m, n) * Complex64::cis(ph);
            }
        }
        acc.norm_sqr() / (d.frames() * d.subcarriers()) as f64
    }

    #[test]
    fn static_target_peaks_at_its_range() {
        let radio = RadioConfig::default();
        let grid = RDGrid::default();
        let d = target(&radio, 0.20, 0.0, 32);
        let map = rd_map(&d, &radio, &grid).unwrap();
        let (r, v) = map.peak();
        assert_eq!(r, grid.range_index(0.20));
        assert_eq!(v, grid.velocity_index(0.0));
    }

    #[test]
    fn moving_target_matches_brute_force() {
        let radio = RadioConfig {
            num_subcarriers: 64,
            ..Default::default()
        };
        let grid = RDGrid::default();
        let d = target(&radio, 0.20, -0.30, 32);
        let power = rd_power(&d, &radio, &grid).unwrap();
        let (ranges, vels) = (grid.ranges(), grid.velocities());
        for (ri, vi) in [(3, 7), (22, 10), (40, 50), (67, 0)] {
            let expect = brute_power(&d, &radio, ranges[ri], vels[vi]);
            let got = power[ri * vels.len() + vi];
            assert!(
                (got - expect).abs() <= 1e-9 * expect.max(1.0),
                "{got} vs {expect}"
            );
        }
        let map = RDMap::from_power(&power, ranges.len(), vels.len(), 0.0, false).unwrap();
        let (r, v) = map.peak();
        assert!(r.abs_diff(grid.range_index(0.20)) <= 1);
        assert!(v.abs_diff(grid.velocity_index(-0.30)) <= 1);
    }

    #[test]
    fn parseval_per_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Complex64> = (0..32).map(|_| complex_gaussian(&mut rng, 2.0)).collect();
        let spec = doppler_spectrum(&x);
        let total: f64 = spec.iter().sum();
        let mean_power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / 32.0;
        assert!((total - 32.0 * mean_power).abs() <= 1e-9 * total);
    }

    #[test]
    fn dense_doppler_hits_native_bins() {
        // at the native bin frequencies the dense transform equals the FFT
        let radio = RadioConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<Complex64> = (0..32).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let native = doppler_spectrum(&x);
        let step = radio
            .doppler_to_velocity(1.0 / (32.0 * radio.frame_interval))
            .abs();
        let vels: Vec<f64> = (0..4).map(|k| -(k as f64) * step).collect();
        let dt = DopplerTransform::new(&radio, &vels, 32, DopplerWindow::Rectangular);
        let mut out = vec![0.0; 4];
        dt.accumulate_power(&x, 1, 0, &mut out, 1.0);
        for k in 0..4 {
            assert!((out[k] - native[k]).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn hann_keeps_noise_gain() {
        let w = window_weights(DopplerWindow::Hann, 32);
        assert!((w.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_wrong_cpi_length() {
        let radio = RadioConfig::default();
        let d = target(&radio, 0.2, 0.0, 16);
        assert!(rd_map(&d, &radio, &RDGrid::default()).is_err());
    }

    #[test]
    fn aliased_grid_is_flagged() {
        let radio = RadioConfig::default();
        let grid = RDGrid {
            velocity_span: 0.6,
            ..Default::default()
        };
        let map = rd_map(&target(&radio, 0.3, 0.1, 32), &radio, &grid).unwrap();
        assert!(map.aliased);
        assert!(map.values.iter().all(|v| v.is_finite()));
    }
}

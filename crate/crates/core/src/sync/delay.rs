use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::sim::ChannelMatrix;

/// Delay decomposition `effective = coarse + fine`, in LTF samples.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DelayEstimate {
    pub coarse: i64,
    /// Multiple of 1/U in (−0.5, 0.5].
    pub fine: f64,
    pub effective: f64,
}

/// Known BPSK LTF symbols on `n` subcarriers.
pub fn ltf_sequence(n: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4C54_4600);
    (0..n)
        .map(|_| Complex64::new(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 0.0))
        .collect()
}

/// Cross-spectrum `RX(k)·conj(REF(k))` over `rx.len()` bins; `reference` is
/// zero-padded to the length of `rx`.
fn cross_spectrum(rx: &[Complex64], reference: &[Complex64]) -> Result<Vec<Complex64>> {
    if rx.is_empty() || reference.is_empty() {
        return Err(Error::Shape("correlation inputs must be non-empty".into()));
    }
    if reference.len() > rx.len() {
        return Err(Error::Shape(format!(
            "reference ({}) longer than received sequence ({})",
            reference.len(),
            rx.len()
        )));
    }
    let len = rx.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut a = rx.to_vec();
    let mut b = reference.to_vec();
    b.resize(len, Complex64::new(0.0, 0.0));
    fft.process(&mut a);
    fft.process(&mut b);
    Ok(a.iter().zip(&b).map(|(x, y)| x * y.conj()).collect())
}

fn wrap_lag(l: usize, len: usize) -> i64 {
    if l > len / 2 {
        l as i64 - len as i64
    } else {
        l as i64
    }
}

/// Integer lag maximizing the circular cross-correlation magnitude
/// `|C(l)| = |Σ_i rx[i + l]·conj(ref[i])|`. Lags past half the length are
/// reported as negative. Ties resolve to the smallest lag index.
pub fn coarse_delay(rx: &[Complex64], reference: &[Complex64]) -> Result<i64> {
    let mut spec = cross_spectrum(rx, reference)?;
    let len = spec.len();
    FftPlanner::<f64>::new().plan_fft_inverse(len).process(&mut spec);
    let mut best = 0;
    let mut best_mag = 0.0;
    for (l, c) in spec.iter().enumerate() {
        let mag = c.norm_sqr();
        if mag > best_mag {
            best_mag = mag;
            best = l;
        }
    }
    if best_mag == 0.0 {
        return Err(Error::NoCorrelationPeak);
    }
    Ok(wrap_lag(best, len))
}

/// Refines `coarse` on a 1/U grid by evaluating the band-limited correlation
/// (the zero-padded spectrum) at `coarse + k/U`, `|k| <= U/2`.
pub fn fine_delay(
    rx: &[Complex64],
    reference: &[Complex64],
    coarse: i64,
    upsample: usize,
) -> Result<DelayEstimate> {
    if upsample == 0 {
        return Err(Error::Config("upsample factor must be >= 1".into()));
    }
    let spec = cross_spectrum(rx, reference)?;
    let len = spec.len() as f64;
    let half = (upsample / 2) as i64;
    let mut best_k: i64 = 0;
    let mut best_mag = -1.0;
    for k in -half..=half {
        let t = coarse as f64 + k as f64 / upsample as f64;
        let w = 2.0 * PI * t / len;
        let c: Complex64 = spec
            .iter()
            .enumerate()
            .map(|(f, p)| p * Complex64::cis(w * f as f64))
            .sum();
        let mag = c.norm_sqr();
        if mag > best_mag || (mag == best_mag && k.abs() < best_k.abs()) {
            best_mag = mag;
            best_k = k;
        }
    }
    if best_mag <= 0.0 {
        return Err(Error::NoCorrelationPeak);
    }
    let (mut coarse, mut k) = (coarse, best_k);
    // keep the fine part in (−0.5, 0.5]
    if 2 * k == -(upsample as i64) {
        coarse -= 1;
        k = -k;
    }
    let fine = k as f64 / upsample as f64;
    Ok(DelayEstimate {
        coarse,
        fine,
        effective: coarse as f64 + fine,
    })
}

/// Removes a delay of `samples` by the inverse subcarrier phase ramp.
pub fn correct_delay(d: &ChannelMatrix, samples: f64) -> ChannelMatrix {
    let mut out = d.clone();
    if samples == 0.0 {
        return out;
    }
    let n_sc = d.subcarriers() as f64;
    let ramp: Vec<Complex64> = (0..d.subcarriers())
        .map(|n| Complex64::cis(2.0 * PI * n as f64 * samples / n_sc))
        .collect();
    for m in 0..out.frames() {
        for (v, r) in out.row_mut(m).iter_mut().zip(&ramp) {
            *v *= r;
        }
    }
    out
}

fn ifft(mut x: Vec<Complex64>) -> Vec<Complex64> {
    let len = x.len();
    FftPlanner::<f64>::new().plan_fft_inverse(len).process(&mut x);
    let s = 1.0 / len as f64;
    x.iter_mut().for_each(|v| *v *= s);
    x
}

/// Estimates the delay of the dominant path (the Tx–Rx leakage) from the
/// stream-averaged received LTF and aligns it to zero delay.
pub fn calibrate_delay(d: &ChannelMatrix, upsample: usize) -> Result<(ChannelMatrix, DelayEstimate)> {
    let ltf = ltf_sequence(d.subcarriers());
    let mean = d.subcarrier_means();
    let reference = ifft(ltf.clone());
    let rx = ifft(ltf.iter().zip(&mean).map(|(x, h)| x * h).collect());
    let coarse = coarse_delay(&rx, &reference)?;
    let est = fine_delay(&rx, &reference, coarse, upsample)?;
    Ok((correct_delay(d, est.effective), est))
}

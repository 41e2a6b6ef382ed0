use num_complex::Complex64;
use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;

use super::SyncConfig;
use crate::error::{Error, Result};
use crate::sim::ChannelMatrix;

/// Wraps an angle to (−π, π].
pub(crate) fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// One step of the phase corrector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseStep {
    /// Common phase of the uncorrected frame.
    pub theta: f64,
    /// Circular mean of the previous corrected phases.
    pub reference: f64,
    /// Integer number of quantization steps.
    pub steps: i64,
    /// Applied correction `steps · δ`.
    pub fix: f64,
}

/// Causal common-phase corrector. Frames must be fed in order.
#[derive(Debug, Clone)]
pub struct PhaseCorrector {
    history_len: usize,
    step: f64,
    history: VecDeque<Complex64>,
}

impl PhaseCorrector {
    pub fn new(cfg: &SyncConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            history_len: cfg.history_len,
            step: cfg.phase_step,
            history: VecDeque::with_capacity(cfg.history_len),
        })
    }

    /// Corrects one frame in place. `index` is only used for error reporting.
    pub fn process_frame(&mut self, row: &mut [Complex64], index: usize) -> Result<PhaseStep> {
        let sum: Complex64 = row.iter().sum();
        if sum.norm_sqr() == 0.0 || !sum.is_finite() {
            return Err(Error::UndefinedPhase(index));
        }
        let theta = sum.arg();
        let (reference, steps) = if self.history.is_empty() {
            (theta, 0)
        } else {
            let acc: Complex64 = self.history.iter().sum();
            let reference = if acc.norm_sqr() > 0.0 { acc.arg() } else { theta };
            let delta = wrap_angle(reference - theta);
            (reference, (delta / self.step).round() as i64)
        };
        let fix = steps as f64 * self.step;
        if steps != 0 {
            let rot = Complex64::cis(fix);
            row.iter_mut().for_each(|v| *v *= rot);
        }
        if self.history.len() == self.history_len {
            self.history.pop_front();
        }
        self.history.push_back(Complex64::cis(theta + fix));
        Ok(PhaseStep {
            theta,
            reference,
            steps,
            fix,
        })
    }
}

/// Per-frame record of the phase correction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseCorrectionLog {
    pub theta: Vec<f64>,
    pub reference: Vec<f64>,
    pub steps: Vec<i64>,
    pub fix: Vec<f64>,
}

impl PhaseCorrectionLog {
    fn push(&mut self, s: PhaseStep) {
        self.theta.push(s.theta);
        self.reference.push(s.reference);
        self.steps.push(s.steps);
        self.fix.push(s.fix);
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,theta,reference,steps,fix")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i, self.theta[i], self.reference[i], self.steps[i], self.fix[i]
            )?;
        }
        Ok(())
    }
}

/// Applies the causal quantized common-phase correction to every frame.
pub fn phase_correct(d: &ChannelMatrix, cfg: &SyncConfig) -> Result<(ChannelMatrix, PhaseCorrectionLog)> {
    let mut pc = PhaseCorrector::new(cfg)?;
    let mut out = d.clone();
    let mut log = PhaseCorrectionLog::default();
    for m in 0..out.frames() {
        log.push(pc.process_frame(out.row_mut(m), m)?);
    }
    Ok((out, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{apply_impairments, complex_gaussian, ImpairmentSpec};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn static_matrix(m: usize, n: usize, seed: u64) -> ChannelMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row: Vec<Complex64> = (0..n)
            .map(|_| Complex64::new(2.0, 0.5) + complex_gaussian(&mut rng, 0.1))
            .collect();
        ChannelMatrix::from_fn(m, n, |_, k| row[k])
    }

    #[test]
    fn wraps_to_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn no_drift_means_no_fix() {
        let d = static_matrix(40, 32, 4);
        let (out, log) = phase_correct(&d, &SyncConfig::default()).unwrap();
        assert!(log.fix.iter().all(|&f| f == 0.0));
        assert_eq!(out, d);
    }

    #[test]
    fn history_one_tracks_constant_offset() {
        let d = static_matrix(10, 16, 5);
        let mut shifted = d.clone();
        let rot = Complex64::cis(0.4);
        for m in 5..10 {
            shifted.row_mut(m).iter_mut().for_each(|v| *v *= rot);
        }
        let cfg = SyncConfig {
            history_len: 1,
            ..Default::default()
        };
        let (_, log) = phase_correct(&shifted, &cfg).unwrap();
        let expect = (-0.4 / cfg.phase_step).round() as i64;
        assert_eq!(log.steps[5], expect);
        assert!(log.steps[6..].iter().all(|&s| s == expect));
    }

    #[test]
    fn reduces_random_walk_error() {
        let d = static_matrix(256, 32, 6);
        let imp = ImpairmentSpec {
            phase_drift_std: 0.05,
            rng_seed: 9,
            ..Default::default()
        };
        let drifted = apply_impairments(&d, &imp);
        let (fixed, _) = phase_correct(&drifted, &SyncConfig::default()).unwrap();
        let err = |x: &ChannelMatrix| {
            let th0 = x.row(0).iter().sum::<Complex64>().arg();
            (0..x.frames())
                .map(|m| {
                    let th = x.row(m).iter().sum::<Complex64>().arg();
                    wrap_angle(th - th0).powi(2)
                })
                .sum::<f64>()
        };
        assert!(err(&fixed) < 0.1 * err(&drifted));
    }

    #[test]
    fn zero_frame_is_an_error() {
        let mut d = static_matrix(4, 8, 7);
        d.row_mut(2)
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        assert!(matches!(
            phase_correct(&d, &SyncConfig::default()),
            Err(Error::UndefinedPhase(2))
        ));
    }

    #[test]
    fn log_csv_has_one_line_per_frame() {
        let d = static_matrix(6, 8, 8);
        let (_, log) = phase_correct(&d, &SyncConfig::default()).unwrap();
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    proptest! {
        #[test]
        fn fix_is_quantized_and_magnitudes_kept(
            seed in 0u64..1000,
            drift in 0.0f64..0.5,
            h in 1usize..12,
            k in 1u32..128,
        ) {
            let d = apply_impairments(
                &static_matrix(24, 8, seed),
                &ImpairmentSpec { phase_drift_std: drift, rng_seed: seed, ..Default::default() },
            );
            let cfg = SyncConfig {
                history_len: h,
                phase_step: PI / k as f64,
                ..Default::default()
            };
            let (out, log) = phase_correct(&d, &cfg).unwrap();
            prop_assert_eq!(log.fix[0], 0.0);
            for m in 0..d.frames() {
                prop_assert_eq!(log.fix[m], log.steps[m] as f64 * cfg.phase_step);
                let delta = wrap_angle(log.reference[m] - log.theta[m]);
                prop_assert!((log.fix[m] - delta).abs() <= cfg.phase_step / 2.0 + 1e-12);
                for (a, b) in out.row(m).iter().zip(d.row(m)) {
                    prop_assert!((a.norm() - b.norm()).abs() <= 1e-14 * b.norm());
                }
            }
        }

        #[test]
        fn correction_is_causal(seed in 0u64..1000, cut in 1usize..23) {
            let d = apply_impairments(
                &static_matrix(24, 8, seed),
                &ImpairmentSpec { phase_drift_std: 0.2, rng_seed: seed, ..Default::default() },
            );
            let mut e = d.clone();
            for m in cut..24 {
                e.row_mut(m).iter_mut().for_each(|v| *v = -*v * 3.0);
            }
            let cfg = SyncConfig::default();
            let (a, la) = phase_correct(&d, &cfg).unwrap();
            let (b, lb) = phase_correct(&e, &cfg).unwrap();
            prop_assert_eq!(&la.fix[..cut], &lb.fix[..cut]);
            for m in 0..cut {
                prop_assert_eq!(a.row(m), b.row(m));
            }
        }
    }
}

//! Synchronization and self-interference cancellation.
//!
//! The chain runs in three steps: a global delay calibration from the
//! cross-correlation with the known LTF, a causal quantized common-phase
//! correction per frame, and a batch mean subtraction per coherent
//! processing interval that removes the frame-constant Tx–Rx leakage.

mod delay;
mod phase;
mod sic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ChannelMatrix;

pub use delay::{calibrate_delay, coarse_delay, correct_delay, fine_delay, ltf_sequence, DelayEstimate};
pub use phase::{phase_correct, PhaseCorrectionLog, PhaseCorrector, PhaseStep};
pub use sic::cancel_self_interference;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncConfig {
    /// Upsampling factor U of the fine correlation.
    pub upsample_factor: usize,
    /// Number H of past corrected frames in the phase reference.
    pub history_len: usize,
    /// Quantization step δ of the phase fix (rad).
    pub phase_step: f64,
    /// Run the delay calibration before phase correction.
    pub calibrate_delay: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            upsample_factor: 16,
            history_len: 8,
            phase_step: std::f64::consts::PI / 64.0,
            calibrate_delay: true,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.upsample_factor == 0 {
            return Err(Error::Config("upsample_factor must be >= 1".into()));
        }
        if self.history_len == 0 {
            return Err(Error::Config("history_len must be >= 1".into()));
        }
        if !(self.phase_step > 0.0 && self.phase_step <= std::f64::consts::PI) {
            return Err(Error::Config("phase_step must be in (0, π]".into()));
        }
        Ok(())
    }
}

/// Output of delay calibration followed by phase correction.
#[derive(Debug, Clone)]
pub struct Synchronized {
    pub matrix: ChannelMatrix,
    pub delay: Option<DelayEstimate>,
    pub phase_log: PhaseCorrectionLog,
}

/// Runs delay calibration (if enabled) and phase correction over a stream.
/// Self-interference cancellation is left to the per-CPI stage.
pub fn synchronize(d: &ChannelMatrix, cfg: &SyncConfig) -> Result<Synchronized> {
    cfg.validate()?;
    let (aligned, delay) = if cfg.calibrate_delay {
        let (m, est) = calibrate_delay(d, cfg.upsample_factor)?;
        (m, Some(est))
    } else {
        (d.clone(), None)
    };
    let (matrix, phase_log) = phase_correct(&aligned, cfg)?;
    Ok(Synchronized {
        matrix,
        delay,
        phase_log,
    })
}

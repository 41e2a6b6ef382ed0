use crate::error::{Error, Result};
use crate::sim::ChannelMatrix;

/// Subtracts the per-subcarrier temporal mean, removing every component that
/// is constant across frames (the Tx–Rx leakage and static clutter).
pub fn cancel_self_interference(d: &ChannelMatrix) -> Result<ChannelMatrix> {
    if d.frames() < 2 {
        return Err(Error::Shape(format!(
            "self-interference cancellation needs at least 2 frames, got {}",
            d.frames()
        )));
    }
    let means = d.subcarrier_means();
    let mut out = d.clone();
    for m in 0..out.frames() {
        for (v, mu) in out.row_mut(m).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    Ok(out)
}

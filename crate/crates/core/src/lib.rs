//! Monostatic Wi-Fi range-Doppler sensing and gesture recognition.
//!
//! The crate is organized along the processing chain:
//!
//! - [`sim`]: frequency-domain OFDM channel synthesis for gesturing hands,
//!   background movers, leakage, noise and clock impairments.
//! - [`sync`]: delay calibration, quantized common-phase correction and
//!   mean-subtraction self-interference cancellation.
//! - [`rdpipe`]: zoomed range-Doppler maps, SNR normalization, 32-frame clips
//!   and velocity spectrograms.
//! - [`learn`]: a from-scratch CNN-GRU classifier, a nearest-centroid
//!   baseline and the evaluation metrics.
//! - [`dataio`]: the binary clip store and the split protocols.

// Validation is written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod learn;
pub mod radio;
pub mod rdpipe;
pub mod sim;
pub mod sync;

pub use error::{Error, Result};
pub use radio::{RadioConfig, SPEED_OF_LIGHT};
pub use rdpipe::{RDClip, RDGrid, RDMap};
pub use sim::{ChannelMatrix, GestureKind, ImpairmentSpec, TargetState, TargetTrack};
pub use sync::SyncConfig;

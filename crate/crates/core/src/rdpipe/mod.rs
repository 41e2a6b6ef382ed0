//! Range-Doppler processing: zoomed RD maps, SNR normalization into 64×64
//! frames, 32-frame clips and velocity spectrograms.

mod export;
mod noise;
mod normalize;
mod pipeline;
mod segment;
mod spectrogram;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::sim::GestureKind;

pub use export::Heatmap;
pub use noise::estimate_noise_floor;
pub use normalize::{normalize_frame, normalize_values, resize_bilinear, SNR_MAX_DB, SNR_MIN_DB};
pub use pipeline::{process_recording, rd_stream, scenario_clips, PipelineConfig, ProcessedRecording};
pub use segment::{rd_span, segment_clips, LabeledSpan};
pub use spectrogram::{velocity_spectrogram, Spectrogram, SpectrogramMode};
pub use transform::{doppler_spectrum, rd_map, rd_power, DopplerTransform, RangeTransform};

/// Side length of a normalized frame.
pub const FRAME_SIDE: usize = 64;
/// Number of RD frames per clip.
pub const CLIP_FRAMES: usize = 32;

/// Slow-time taper applied before the Doppler transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerWindow {
    #[default]
    Rectangular,
    Hann,
}

/// Sampling grid of the zoomed RD map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RDGrid {
    pub range_min: f64,
    pub range_max: f64,
    pub range_cell: f64,
    /// Half-span of the velocity axis (m/s); the axis is symmetric.
    pub velocity_span: f64,
    pub velocity_cell: f64,
    /// OFDM frames per CPI (native Doppler bins).
    pub cpi_frames: usize,
    /// OFDM frames between consecutive CPIs.
    pub cpi_hop: usize,
    pub doppler_window: DopplerWindow,
}

impl Default for RDGrid {
    fn default() -> Self {
        Self {
            range_min: 0.0,
            range_max: 0.63,
            range_cell: 0.0093,
            velocity_span: 0.45,
            velocity_cell: 0.015,
            cpi_frames: 32,
            cpi_hop: 4,
            doppler_window: DopplerWindow::Rectangular,
        }
    }
}

const GRID_EPS: f64 = 1e-9;

impl RDGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.range_min,
            self.range_max,
            self.range_cell,
            self.velocity_span,
            self.velocity_cell,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("grid values must be finite".into()));
        }
        if self.range_min < 0.0 || self.range_max <= self.range_min {
            return Err(Error::Config(format!(
                "range window [{}, {}] is empty or negative",
                self.range_min, self.range_max
            )));
        }
        if self.range_cell <= 0.0 || self.velocity_cell <= 0.0 || self.velocity_span <= 0.0 {
            return Err(Error::Config("cell sizes and span must be positive".into()));
        }
        if self.cpi_frames < 2 || self.cpi_hop == 0 {
            return Err(Error::Config("need cpi_frames >= 2 and cpi_hop >= 1".into()));
        }
        Ok(())
    }

    pub fn num_ranges(&self) -> usize {
        ((self.range_max - self.range_min) / self.range_cell + GRID_EPS).floor() as usize + 1
    }

    pub fn num_velocities(&self) -> usize {
        2 * (self.velocity_span / self.velocity_cell + GRID_EPS).floor() as usize + 1
    }

    /// Range cell centres, ascending from `range_min`.
    pub fn ranges(&self) -> Vec<f64> {
        (0..self.num_ranges())
            .map(|i| self.range_min + i as f64 * self.range_cell)
            .collect()
    }

    /// Velocity cell centres, ascending and symmetric about zero.
    pub fn velocities(&self) -> Vec<f64> {
        let half = (self.num_velocities() / 2) as i64;
        (-half..=half).map(|k| k as f64 * self.velocity_cell).collect()
    }

    /// True when the velocity axis exceeds the unambiguous span λ/(4T).
    pub fn aliased(&self, radio: &RadioConfig) -> bool {
        self.velocity_span > radio.max_velocity() * (1.0 + 1e-12)
    }

    /// Index of the range cell nearest to `r`.
    pub fn range_index(&self, r: f64) -> usize {
        let i = ((r - self.range_min) / self.range_cell).round();
        i.clamp(0.0, (self.num_ranges() - 1) as f64) as usize
    }

    pub fn velocity_index(&self, v: f64) -> usize {
        let half = (self.num_velocities() / 2) as f64;
        let i = (v / self.velocity_cell).round() + half;
        i.clamp(0.0, 2.0 * half) as usize
    }

    /// Time span of `rd_frames` consecutive RD frames, in seconds.
    pub fn clip_duration(&self, rd_frames: usize, radio: &RadioConfig) -> f64 {
        (rd_frames * self.cpi_hop) as f64 * radio.frame_interval
    }

    /// Number of CPIs that fit in a stream of `frames` OFDM frames.
    pub fn num_cpis(&self, frames: usize) -> usize {
        if frames < self.cpi_frames {
            0
        } else {
            (frames - self.cpi_frames) / self.cpi_hop + 1
        }
    }

    /// Centre time of CPI `k` (s).
    pub fn cpi_time(&self, k: usize, radio: &RadioConfig) -> f64 {
        self.cpi_center(k) * radio.frame_interval
    }

    /// Centre of CPI `k` in OFDM frame units.
    pub fn cpi_center(&self, k: usize) -> f64 {
        (k * self.cpi_hop) as f64 + (self.cpi_frames - 1) as f64 / 2.0
    }
}

/// One RD map in dB SNR, stored range-major (`values[r * n_velocity + v]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDMap {
    pub n_range: usize,
    pub n_velocity: usize,
    pub values: Vec<f64>,
    pub noise_floor: f64,
    pub timestamp: f64,
    /// Velocity axis extends past the unambiguous span.
    pub aliased: bool,
}

impl RDMap {
    /// Builds a map from linear power, referencing it to the median floor.
    pub fn from_power(
        power: &[f64],
        n_range: usize,
        n_velocity: usize,
        timestamp: f64,
        aliased: bool,
    ) -> Result<Self> {
        if power.len() != n_range * n_velocity {
            return Err(Error::Shape(format!(
                "power grid has {} cells, expected {n_range}×{n_velocity}",
                power.len()
            )));
        }
        let noise_floor = estimate_noise_floor(power)?;
        let values = power.iter().map(|&p| to_db(p) - noise_floor).collect();
        Ok(Self {
            n_range,
            n_velocity,
            values,
            noise_floor,
            timestamp,
            aliased,
        })
    }

    pub fn get(&self, r: usize, v: usize) -> f64 {
        self.values[r * self.n_velocity + v]
    }

    /// Cell (range index, velocity index) of the maximum.
    pub fn peak(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &x) in self.values.iter().enumerate() {
            if x > self.values[best] {
                best = i;
            }
        }
        (best / self.n_velocity, best % self.n_velocity)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn heatmap(&self, grid: &RDGrid) -> Heatmap {
        Heatmap {
            row_label: "range_m".into(),
            col_label: "velocity_mps".into(),
            row_axis: grid.ranges(),
            col_axis: grid.velocities(),
            values: self.values.clone(),
        }
    }
}

/// Power in dB with exact zeros mapped to the smallest positive normal.
pub fn to_db(p: f64) -> f64 {
    10.0 * p.max(f64::MIN_POSITIVE).log10()
}

/// Provenance of a clip.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClipMeta {
    pub user: u32,
    pub location: String,
    /// Recording or scenario the clip was cut from.
    pub source: String,
    /// First RD frame of the clip within its recording.
    pub start_frame: usize,
}

/// A window of normalized RD frames, each `FRAME_SIDE`² values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RDClip {
    pub frames: Vec<f32>,
    pub label: Option<GestureKind>,
    pub meta: ClipMeta,
}

impl RDClip {
    pub const FRAME_LEN: usize = FRAME_SIDE * FRAME_SIDE;

    pub fn new(frames: Vec<f32>, label: Option<GestureKind>, meta: ClipMeta) -> Result<Self> {
        if frames.is_empty() || !frames.len().is_multiple_of(Self::FRAME_LEN) {
            return Err(Error::Shape(format!(
                "clip payload of {} values is not a whole number of {FRAME_SIDE}×{FRAME_SIDE} frames",
                frames.len()
            )));
        }
        if frames.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("clip values must lie in [0, 1]".into()));
        }
        Ok(Self { frames, label, meta })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len() / Self::FRAME_LEN
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.frames[i * Self::FRAME_LEN..(i + 1) * Self::FRAME_LEN]
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectrogram::remove_mean;
use super::transform::{block_power, DopplerTransform, RangeTransform};
use super::{normalize_frame, rd_span, segment_clips, ClipMeta, RDClip, RDGrid, RDMap, CLIP_FRAMES};
use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::sim::scenario::{Annotation, Scenario};
use crate::sim::ChannelMatrix;
use crate::sync::{synchronize, DelayEstimate, PhaseCorrectionLog, SyncConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: RDGrid,
    pub sync: SyncConfig,
    /// RD frames per clip.
    pub clip_frames: usize,
    /// RD frames between consecutive clips.
    pub clip_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grid: RDGrid::default(),
            sync: SyncConfig::default(),
            clip_frames: CLIP_FRAMES,
            clip_stride: CLIP_FRAMES,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sync.validate()?;
        if self.clip_frames == 0 || self.clip_stride == 0 {
            return Err(Error::Config("clip_frames and clip_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// RD maps of every CPI of a synchronized stream, in time order.
///
/// Each frame is range-transformed once and the per-CPI mean subtraction is
/// done on the transformed gates, which equals cancelling per CPI first
/// because both steps are linear.
pub fn rd_stream(d: &ChannelMatrix, radio: &RadioConfig, grid: &RDGrid) -> Result<Vec<RDMap>> {
    grid.validate()?;
    let n_cpi = grid.num_cpis(d.frames());
    if n_cpi == 0 {
        return Ok(Vec::new());
    }
    let range = RangeTransform::for_grid(radio, grid);
    let doppler = DopplerTransform::for_grid(radio, grid);
    let gates = range.gates();
    let block = range.apply(d)?;
    let m = grid.cpi_frames;
    let aliased = grid.aliased(radio);
    (0..n_cpi)
        .into_par_iter()
        .map(|k| {
            let s = k * grid.cpi_hop;
            let mut cpi = block[s * gates..(s + m) * gates].to_vec();
            remove_mean(&mut cpi, gates);
            let power = block_power(&cpi, gates, &doppler);
            RDMap::from_power(&power, gates, doppler.cells(), grid.cpi_time(k, radio), aliased)
        })
        .collect()
}

/// Everything produced from one recording.
#[derive(Debug, Clone)]
pub struct ProcessedRecording {
    pub synchronized: ChannelMatrix,
    pub delay: Option<DelayEstimate>,
    pub phase_log: PhaseCorrectionLog,
    pub maps: Vec<RDMap>,
    pub frames: Vec<Vec<f32>>,
    pub clips: Vec<RDClip>,
}

/// Sync, RD maps, normalization and segmentation of one recording.
/// `annotations` are in OFDM frame units.
pub fn process_recording(
    d: &ChannelMatrix,
    radio: &RadioConfig,
    cfg: &PipelineConfig,
    annotations: &[Annotation],
    meta: &ClipMeta,
) -> Result<ProcessedRecording> {
    cfg.validate()?;
    let sync = synchronize(d, &cfg.sync)?;
    let maps = rd_stream(&sync.matrix, radio, &cfg.grid)?;
    let frames: Vec<Vec<f32>> = maps.iter().map(normalize_frame).collect();
    let spans: Vec<_> = annotations
        .iter()
        .filter_map(|a| rd_span(a, &cfg.grid, maps.len()))
        .collect();
    let clips = segment_clips(&frames, &spans, cfg.clip_frames, cfg.clip_stride, meta)?;
    Ok(ProcessedRecording {
        synchronized: sync.matrix,
        delay: sync.delay,
        phase_log: sync.phase_log,
        maps,
        frames,
        clips,
    })
}

/// Synthesizes every recording of `scenario` and returns their clips in
/// recording order. Recordings are processed in parallel on the current
/// rayon pool; the output does not depend on the thread count.
pub fn scenario_clips(scenario: &Scenario, cfg: &PipelineConfig) -> Result<Vec<RDClip>> {
    cfg.validate()?;
    let per_recording: Vec<Vec<RDClip>> = scenario
        .all_recordings()
        .par_iter()
        .map(|r| {
            let syn = r.synthesize(&scenario.radio, &scenario.kinematics, &scenario.mover)?;
            let meta = ClipMeta {
                user: syn.user,
                location: syn.location.clone(),
                source: syn.name.clone(),
                start_frame: 0,
            };
            Ok(process_recording(&syn.matrix, &scenario.radio, cfg, &syn.annotations, &meta)?.clips)
        })
        .collect::<Result<_>>()?;
    Ok(per_recording.into_iter().flatten().collect())
}

//! CNN-GRU gesture classifier with hand-written backpropagation, a
//! nearest-centroid baseline and the evaluation metrics.

mod centroid;
mod checkpoint;
mod metrics;
mod model;
mod optim;
mod scalar;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdpipe::{CLIP_FRAMES, FRAME_SIDE};

pub use centroid::nearest_centroid;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use metrics::{confusion_matrix, ClassMetrics, EvalReport, Metrics};
pub use model::{cross_entropy, softmax, CnnGru, ForwardCache};
pub use optim::AdamW;
pub use scalar::Scalar;
pub use train::{
    evaluate, samples_from_clips, train, train_run, EpochLog, RunSummary, Sample, TrainConfig, TrainOutcome,
};

/// One convolution: `out_channels` filters of `kernel`×`kernel`, padding
/// `kernel / 2`, followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_size(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding();
        if self.stride == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnGruSpec {
    pub conv: Vec<ConvSpec>,
    /// Side of the average pooling applied after the last convolution
    /// (1 disables it).
    pub pool: usize,
    pub gru_hidden: usize,
    pub dropout: f64,
    pub num_classes: usize,
    pub input_frames: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for CnnGruSpec {
    fn default() -> Self {
        Self {
            conv: vec![
                ConvSpec {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 32,
                    kernel: 3,
                    stride: 2,
                },
            ],
            pool: 2,
            gru_hidden: 64,
            dropout: 0.2,
            num_classes: 5,
            input_frames: CLIP_FRAMES,
            input_height: FRAME_SIDE,
            input_width: FRAME_SIDE,
        }
    }
}

/// Parameter and forward-FLOP count of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    /// 2 × multiply-adds for one clip.
    pub flops: u64,
}

/// Feature-map shape after each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MapShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

pub fn conv_cost(
    name: &str,
    in_ch: usize,
    conv: &ConvSpec,
    out_h: usize,
    out_w: usize,
    frames: usize,
) -> LayerCost {
    let fan_in = (in_ch * conv.kernel * conv.kernel) as u64;
    let out = conv.out_channels as u64;
    LayerCost {
        name: name.into(),
        params: fan_in * out + out,
        flops: 2 * fan_in * out * (out_h * out_w * frames) as u64,
    }
}

pub fn affine_cost(name: &str, inputs: usize, outputs: usize) -> LayerCost {
    let (i, o) = (inputs as u64, outputs as u64);
    LayerCost {
        name: name.into(),
        params: i * o + o,
        flops: 2 * i * o,
    }
}

pub fn gru_cost(name: &str, inputs: usize, hidden: usize, steps: usize) -> LayerCost {
    let (d, h) = (inputs as u64, hidden as u64);
    LayerCost {
        name: name.into(),
        params: 3 * h * d + 3 * h * h + 6 * h,
        flops: 2 * (3 * h * d + 3 * h * h) * steps as u64,
    }
}

impl CnnGruSpec {
    /// Tiny network used by the gradient check.
    pub fn tiny() -> Self {
        Self {
            conv: vec![
                ConvSpec {
                    out_channels: 3,
                    kernel: 3,
                    stride: 2,
                },
                ConvSpec {
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                },
            ],
            pool: 2,
            gru_hidden: 8,
            dropout: 0.2,
            num_classes: 5,
            input_frames: 4,
            input_height: 8,
            input_width: 8,
        }
    }

    pub(crate) fn shapes(&self) -> Result<Vec<MapShape>> {
        let mut s = MapShape {
            channels: 1,
            height: self.input_height,
            width: self.input_width,
        };
        let mut out = vec![s];
        for (i, c) in self.conv.iter().enumerate() {
            if c.out_channels == 0 || c.kernel == 0 || c.stride == 0 {
                return Err(Error::Config(format!("conv layer {i} has a zero dimension")));
            }
            s = MapShape {
                channels: c.out_channels,
                height: c
                    .output_size(s.height)
                    .ok_or_else(|| Error::Config(format!("conv layer {i} does not fit its input")))?,
                width: c
                    .output_size(s.width)
                    .ok_or_else(|| Error::Config(format!("conv layer {i} does not fit its input")))?,
            };
            out.push(s);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0 || self.input_height == 0 || self.input_width == 0 {
            return Err(Error::Config("input dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.num_classes < 2 || self.gru_hidden == 0 || self.pool == 0 {
            return Err(Error::Config(
                "need >= 2 classes, hidden >= 1 and pool >= 1".into(),
            ));
        }
        let last = *self.shapes()?.last().unwrap();
        if last.height % self.pool != 0 || last.width % self.pool != 0 {
            return Err(Error::Config(format!(
                "feature map {}×{} is not divisible by pool {}",
                last.height, last.width, self.pool
            )));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.input_frames * self.input_height * self.input_width
    }

    /// Length of the per-frame feature vector fed to the GRU.
    pub fn feature_len(&self) -> Result<usize> {
        let last = *self.shapes()?.last().unwrap();
        Ok(last.channels * (last.height / self.pool) * (last.width / self.pool))
    }

    pub fn layer_costs(&self) -> Result<Vec<LayerCost>> {
        self.validate()?;
        let shapes = self.shapes()?;
        let mut out = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            let s = shapes[i + 1];
            out.push(conv_cost(
                &format!("conv{}", i + 1),
                shapes[i].channels,
                c,
                s.height,
                s.width,
                self.input_frames,
            ));
        }
        out.push(gru_cost(
            "gru",
            self.feature_len()?,
            self.gru_hidden,
            self.input_frames,
        ));
        out.push(affine_cost("fc", self.gru_hidden, self.num_classes));
        Ok(out)
    }

    pub fn num_params(&self) -> Result<usize> {
        Ok(self.layer_costs()?.iter().map(|l| l.params as usize).sum())
    }
}

/// Trainable parameter count and forward GFLOPs per clip.
pub fn count_params_flops(spec: &CnnGruSpec) -> Result<(u64, f64)> {
    let costs = spec.layer_costs()?;
    let params = costs.iter().map(|l| l.params).sum();
    let flops: u64 = costs.iter().map(|l| l.flops).sum();
    Ok((params, flops as f64 * 1e-9))
}

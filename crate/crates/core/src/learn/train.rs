use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::metrics::{EvalReport, Metrics};
use super::model::{cross_entropy, CnnGru};
use super::optim::AdamW;
use super::{count_params_flops, CnnGruSpec};
use crate::error::{Error, Result};
use crate::rdpipe::RDClip;
use crate::sim::scenario::mix_seed;

/// One labeled network input.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f32],
    pub y: usize,
}

/// Labeled clips as samples; unlabeled clips are skipped.
pub fn samples_from_clips(clips: &[RDClip]) -> Vec<Sample<'_>> {
    clips
        .iter()
        .filter_map(|c| {
            c.label.map(|g| Sample {
                x: &c.frames,
                y: g.index(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement
    /// (0 disables early stopping).
    pub patience: usize,
    pub runs: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            max_epochs: 100,
            patience: 15,
            runs: 5,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config(
                "learning rate and eps must be positive, weight decay >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.runs == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and runs must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

impl EpochLog {
    pub fn write_csv<W: Write>(curve: &[EpochLog], mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_acc")?;
        for e in curve {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_acc)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub loss_curve: Vec<EpochLog>,
}

/// The selected model and its test report.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CnnGru<f32>,
    pub report: EvalReport,
    pub runs: Vec<RunSummary>,
    pub selected: usize,
}

fn check_split(name: &'static str, s: &[Sample], spec: &CnnGruSpec) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySplit(name));
    }
    if let Some(bad) = s
        .iter()
        .find(|s| s.y >= spec.num_classes || s.x.len() != spec.input_len())
    {
        return Err(Error::Invalid(format!(
            "{name} sample with label {} and {} values does not fit the model",
            bad.y,
            bad.x.len()
        )));
    }
    Ok(())
}

/// Mean eval-mode loss and accuracy (%).
fn score(model: &CnnGru<f32>, set: &[Sample]) -> Result<(f64, f64)> {
    let k = model.spec().num_classes;
    let inputs: Vec<&[f32]> = set.iter().map(|s| s.x).collect();
    let logits = model.logits(&inputs)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for (row, s) in logits.chunks_exact(k).zip(set) {
        loss += cross_entropy(row, s.y) as f64;
        let pred = (0..k).fold(0, |b, i| if row[i] > row[b] { i } else { b });
        correct += usize::from(pred == s.y);
    }
    Ok((loss / set.len() as f64, 100.0 * correct as f64 / set.len() as f64))
}

/// One seeded training run; returns the parameters of the best validation
/// epoch (highest accuracy, ties to lower loss).
pub fn train_run(
    train: &[Sample],
    val: &[Sample],
    spec: &CnnGruSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(CnnGru<f32>, RunSummary)> {
    cfg.validate()?;
    check_split("train", train, spec)?;
    check_split("val", val, spec)?;
    let mut model = CnnGru::<f32>::new(spec, seed)?;
    let mut opt = AdamW::<f32>::new(model.num_params(), cfg.learning_rate, cfg.weight_decay);
    opt.beta1 = cfg.beta1;
    opt.beta2 = cfg.beta2;
    opt.eps = cfg.eps;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_params = model.params().to_vec();
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 1, epoch as u64])));
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f32]> = idx.iter().map(|&i| train[i].x).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| train[i].y).collect();
            let (loss, grad) = model.loss_and_grad(&xs, &ys, mix_seed(&[seed, 2, epoch as u64, b as u64]))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            total += loss as f64 * idx.len() as f64;
            model.update(|p| opt.step(p, &grad));
        }
        let (val_loss, val_acc) = score(&model, val)?;
        let log = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            val_acc,
            val_loss,
        };
        log::info!(
            "seed {seed:#x} epoch {epoch}: loss {:.4} val_acc {:.2} val_loss {:.4}",
            log.train_loss,
            val_acc,
            val_loss
        );
        curve.push(log);
        if val_acc > best.0 || (val_acc == best.0 && val_loss < best.1) {
            best = (val_acc, val_loss);
            best_params.copy_from_slice(model.params());
            best_epoch = epoch;
        } else if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let summary = RunSummary {
        run: 0,
        seed,
        epochs_run: curve.len(),
        best_epoch,
        best_val_acc: best.0,
        best_val_loss: best.1,
        loss_curve: curve,
    };
    Ok((CnnGru::from_params(spec, best_params)?, summary))
}

/// Test-set report of a trained model.
pub fn evaluate(model: &CnnGru<f32>, set: &[Sample]) -> Result<EvalReport> {
    let inputs: Vec<&[f32]> = set.iter().map(|s| s.x).collect();
    let pred = model.predict(&inputs)?;
    let truth: Vec<usize> = set.iter().map(|s| s.y).collect();
    let m = Metrics::from_predictions(&pred, &truth, model.spec().num_classes);
    let (params, gflops) = count_params_flops(model.spec())?;
    Ok(EvalReport::new("cnn-gru", m, params, gflops))
}

/// `cfg.runs` seeded runs; the run with the best validation accuracy (ties to
/// lower validation loss, then the earlier run) is evaluated on `test`.
pub fn train(
    train: &[Sample],
    val: &[Sample],
    test: &[Sample],
    spec: &CnnGruSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_split("test", test, spec)?;
    let mut best: Option<(CnnGru<f32>, usize)> = None;
    let mut runs: Vec<RunSummary> = Vec::new();
    for r in 0..cfg.runs {
        let seed = mix_seed(&[cfg.rng_seed, r as u64]);
        let (model, mut summary) = train_run(train, val, spec, cfg, seed)?;
        summary.run = r;
        let better = match &best {
            None => true,
            Some((_, b)) => {
                let prev = &runs[*b];
                summary.best_val_acc > prev.best_val_acc
                    || (summary.best_val_acc == prev.best_val_acc
                        && summary.best_val_loss < prev.best_val_loss)
            }
        };
        if better {
            best = Some((model, r));
        }
        runs.push(summary);
    }
    let (model, selected) = best.expect("runs >= 1");
    let mut report = evaluate(&model, test)?;
    report.loss_curve = runs[selected].loss_curve.clone();
    Ok(TrainOutcome {
        model,
        report,
        runs,
        selected,
    })
}

//! Mini-batch training with gradient accumulation and best-validation selection.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::evaluate::{evaluate_trajectories, frame_pairs, Pair};
use super::optim::Adam;
use crate::data_io::{ChannelSpec, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::geometry::{NormStats, SystemState};
use crate::model::{inject_noise, record_forward, record_loss, ModelConfig, Task};
use crate::tensor_core::checkpoint::save_checkpoint;
use crate::tensor_core::graph::Graph;
use crate::tensor_core::params::ParameterStore;

/// Training and validation trajectories in original units.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub stats: NormStats,
    pub channels: ChannelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best validation metric, or the final ones without validation data.
    pub best: ParameterStore<f64>,
    pub best_val: Option<f64>,
    pub steps: usize,
    pub log: Vec<LogRow>,
}

impl TrainOutcome {
    pub fn losses(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.train_loss).collect()
    }
}

/// Where to write artifacts; every field is optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// Append-only CSV of [`LogRow`]s.
    pub log: Option<PathBuf>,
    /// Best checkpoint; periodic snapshots go to `<path>.last`.
    pub checkpoint: Option<PathBuf>,
}

/// Seed of the noise drawn for sample `index` at optimizer step `step`.
fn noise_seed(seed: u64, step: usize, index: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

fn append_row(path: &Path, row: &LogRow) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "step,epoch,train_loss,val_metric")?;
    }
    let val = row.val_metric.map(|v| format!("{v:e}")).unwrap_or_default();
    writeln!(f, "{},{},{:e},{}", row.step, row.epoch, row.train_loss, val)?;
    Ok(())
}

fn dump_divergence(checkpoint: Option<&Path>, step: usize, ids: &[String], loss: f64) -> Result<()> {
    let Some(ckpt) = checkpoint else {
        return Ok(());
    };
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".diverged.json");
    let report = serde_json::json!({ "step": step, "loss": loss.to_string(), "samples": ids });
    let mut f = File::create(PathBuf::from(s))?;
    f.write_all(serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}

/// Train `store` in place on single-step pairs of the training trajectories.
/// Each optimizer step accumulates the gradients of `batch` samples scaled by
/// `1/batch`. Rollout training perturbs the normalized inputs with Gaussian
/// noise of `cfg.noise_variance`. A non-finite loss aborts with the offending
/// sample ids.
pub fn train_loop(
    store: &mut ParameterStore<f64>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    data: &TrainData,
    outputs: &TrainOutputs,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let normalized: Vec<Vec<SystemState<f64>>> = data
        .train
        .iter()
        .map(|t| t.frames.iter().map(|f| data.stats.normalize_state(f)).collect())
        .collect::<Result<_>>()?;
    let pairs: Vec<Pair> = frame_pairs(&data.train, cfg.stride);
    if pairs.is_empty() {
        return Err(invalid!("no training pairs at stride {}", cfg.stride));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = Adam::new(tc.lr);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, ParameterStore<f64>)> = None;
    let mut step = 0usize;
    let capped = |step: usize| tc.max_steps > 0 && step >= tc.max_steps;

    let validate = |store: &ParameterStore<f64>, best: &mut Option<(f64, ParameterStore<f64>)>| -> Result<Option<f64>> {
        if data.val.is_empty() {
            return Ok(None);
        }
        let report = evaluate_trajectories(store, cfg, &data.stats, &data.channels, &data.val, "val")?;
        if best.as_ref().is_none_or(|(b, _)| report.mean < *b) {
            *best = Some((report.mean, store.clone()));
        }
        Ok(Some(report.mean))
    };

    'epochs: for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let chunks = order.len().div_ceil(tc.batch);
        for (c, chunk) in order.chunks(tc.batch).enumerate() {
            if capped(step) {
                break 'epochs;
            }
            let scale = 1.0 / chunk.len() as f64;
            let mut total = 0.0;
            for &i in chunk {
                let p = pairs[i];
                let clean = &normalized[p.traj][p.input];
                let input = if cfg.task == Task::Rollout && cfg.noise_variance > 0.0 {
                    inject_noise(clean, cfg.noise_variance, noise_seed(tc.seed, step, i))?
                } else {
                    clean.clone()
                };
                let mut g = Graph::new();
                let outcome = record_forward(&mut g, store, cfg, &input)
                    .and_then(|rec| record_loss(&mut g, &rec.outputs, &normalized[p.traj][p.target], cfg.task));
                let value = match &outcome {
                    Ok(l) => g.value(*l).item(),
                    Err(_) => f64::NAN,
                };
                let loss = match outcome {
                    Ok(l) if value.is_finite() => l,
                    Ok(_) | Err(Error::NonFinite(_)) => {
                        let ids: Vec<String> = chunk
                            .iter()
                            .map(|&j| format!("{}:{}", data.train[pairs[j].traj].id, pairs[j].input))
                            .collect();
                        dump_divergence(outputs.checkpoint.as_deref(), step, &ids, value)?;
                        return Err(Error::NonFinite(format!("training loss at step {step}, samples {}", ids.join(" "))));
                    }
                    Err(e) => return Err(e),
                };
                total += value;
                g.backward_scaled(loss, scale, store)?;
            }
            opt.step(store)?;
            step += 1;
            let due = if tc.val_every > 0 {
                step.is_multiple_of(tc.val_every)
            } else {
                c + 1 == chunks
            };
            let last = epoch + 1 == tc.epochs && c + 1 == chunks;
            let val_metric = if due || last || capped(step) {
                validate(store, &mut best)?
            } else {
                None
            };
            let row = LogRow {
                step,
                epoch,
                train_loss: total * scale,
                val_metric,
            };
            if let Some(path) = &outputs.log {
                append_row(path, &row)?;
            }
            log.push(row);
            if tc.checkpoint_every > 0 && step.is_multiple_of(tc.checkpoint_every) {
                if let Some(path) = &outputs.checkpoint {
                    let mut s = path.as_os_str().to_owned();
                    s.push(".last");
                    save_checkpoint(store, Path::new(&s))?;
                }
            }
        }
    }

    let (best_val, best_store) = match best {
        Some((v, s)) => (Some(v), s),
        None => (None, store.clone()),
    };
    if let Some(path) = &outputs.checkpoint {
        save_checkpoint(&best_store, path)?;
    }
    Ok(TrainOutcome {
        best: best_store,
        best_val,
        steps: step,
        log,
    })
}

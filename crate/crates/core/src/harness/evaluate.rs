//! Prediction in original units and per-quantity error reports.

use serde::{Deserialize, Serialize};

use super::metrics::{ErrorAccumulator, MetricRow};
use crate::data_io::{ChannelSpec, Trajectory};
use crate::error::{invalid, Result};
use crate::geometry::{Domain, NormStats, SystemState};
use crate::model::{compute_loss, model_forward, ModelConfig, Prediction};
use crate::tensor_core::params::ParameterStore;

/// One input/target frame pair of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub traj: usize,
    pub input: usize,
    pub target: usize,
}

/// Every `(t, t + stride)` pair of every trajectory.
pub fn frame_pairs(trajs: &[Trajectory], stride: usize) -> Vec<Pair> {
    let mut out = Vec::new();
    for (k, t) in trajs.iter().enumerate() {
        for i in 0..t.len().saturating_sub(stride) {
            out.push(Pair {
                traj: k,
                input: i,
                target: i + stride,
            });
        }
    }
    out
}

/// Model prediction from a raw input frame, returned in original units.
pub fn predict(
    store: &ParameterStore<f64>,
    cfg: &ModelConfig,
    stats: &NormStats,
    input: &SystemState<f64>,
) -> Result<Prediction<f64>> {
    let normalized = stats.normalize_state(input)?;
    let pred = model_forward(store, cfg, &normalized)?;
    denormalize_prediction(stats, &pred)
}

pub fn denormalize_prediction(stats: &NormStats, pred: &Prediction<f64>) -> Result<Prediction<f64>> {
    Ok(Prediction {
        fluid: stats.denormalize_observation(Domain::Fluid, &pred.fluid)?,
        solid: stats.denormalize_observation(Domain::Solid, &pred.solid)?,
        interface: stats.denormalize_observation(Domain::Interface, &pred.interface)?,
    })
}

/// Pooled errors of every declared channel and of the positions of each domain.
#[derive(Debug, Clone)]
pub struct QuantityErrors {
    channels: Vec<(Domain, usize, ErrorAccumulator)>,
    positions: Vec<(Domain, ErrorAccumulator)>,
}

impl QuantityErrors {
    pub fn new(spec: &ChannelSpec) -> Self {
        let mut channels = Vec::new();
        for d in Domain::ALL {
            for c in 0..spec.domain(d).len() {
                channels.push((d, c, ErrorAccumulator::default()));
            }
        }
        Self {
            channels,
            positions: Domain::ALL.map(|d| (d, ErrorAccumulator::default())).to_vec(),
        }
    }

    pub fn add(&mut self, target: &SystemState<f64>, pred: &Prediction<f64>) -> Result<()> {
        for (d, c, acc) in &mut self.channels {
            let (t, p) = (&target.domain(*d).quantities, &pred.domain(*d).quantities);
            if t.cols() <= *c {
                return Err(invalid!("{d} has {} channels, manifest declares more", t.cols()));
            }
            acc.add(t, p, *c..*c + 1)?;
        }
        for (d, acc) in &mut self.positions {
            let (t, p) = (&target.domain(*d).positions, &pred.domain(*d).positions);
            acc.add(t, p, 0..t.cols())?;
        }
        Ok(())
    }

    pub fn channel_rows(&self, spec: &ChannelSpec) -> Vec<MetricRow> {
        self.channels
            .iter()
            .map(|(d, c, acc)| {
                let ch = &spec.domain(*d)[*c];
                acc.row(*d, &ch.name, &ch.unit)
            })
            .collect()
    }

    pub fn position_rows(&self) -> Vec<MetricRow> {
        self.positions
            .iter()
            .map(|(d, acc)| acc.row(*d, "position", "m"))
            .collect()
    }
}

/// Per-quantity errors over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub samples: usize,
    /// One row per declared channel of each domain.
    pub rows: Vec<MetricRow>,
    /// Position errors of each domain, reported apart from the physical channels.
    pub positions: Vec<MetricRow>,
    /// Mean relative L2 over the channels of each domain, in domain order fluid, solid, interface.
    pub domain_means: [f64; 3],
    /// Mean of `domain_means`.
    pub mean: f64,
}

impl MetricReport {
    pub fn from_errors(split: &str, samples: usize, errors: &QuantityErrors, spec: &ChannelSpec) -> Self {
        let rows = errors.channel_rows(spec);
        let domain_means = Domain::ALL.map(|d| {
            let v: Vec<f64> = rows.iter().filter(|r| r.domain == d).map(|r| r.relative_l2).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        });
        Self {
            split: split.into(),
            samples,
            rows,
            positions: errors.position_rows(),
            mean: domain_means.iter().sum::<f64>() / 3.0,
            domain_means,
        }
    }

    pub fn all_nonnegative(&self) -> bool {
        self.rows
            .iter()
            .chain(&self.positions)
            .all(|r| r.relative_l2 >= 0.0 && r.rmse >= 0.0)
    }
}

/// Errors of single-step predictions over every frame pair of `trajs`.
pub fn evaluate_trajectories(
    store: &ParameterStore<f64>,
    cfg: &ModelConfig,
    stats: &NormStats,
    spec: &ChannelSpec,
    trajs: &[Trajectory],
    split: &str,
) -> Result<MetricReport> {
    evaluate_with(spec, trajs, cfg.stride, split, |input| predict(store, cfg, stats, input))
}

/// Errors of an arbitrary predictor mapping raw frames to raw predictions.
pub fn evaluate_with<F>(
    spec: &ChannelSpec,
    trajs: &[Trajectory],
    stride: usize,
    split: &str,
    mut predictor: F,
) -> Result<MetricReport>
where
    F: FnMut(&SystemState<f64>) -> Result<Prediction<f64>>,
{
    let pairs = frame_pairs(trajs, stride);
    if pairs.is_empty() {
        return Err(invalid!("split `{split}` has no frame pairs at stride {stride}"));
    }
    let mut errors = QuantityErrors::new(spec);
    for p in &pairs {
        let t = &trajs[p.traj];
        let pred = predictor(&t.frames[p.input])?;
        errors.add(&t.frames[p.target], &pred)?;
    }
    Ok(MetricReport::from_errors(split, pairs.len(), &errors, spec))
}

/// Training objective averaged over every frame pair of `trajs`, in normalized units.
pub fn mean_loss(
    store: &ParameterStore<f64>,
    cfg: &ModelConfig,
    stats: &NormStats,
    trajs: &[Trajectory],
) -> Result<f64> {
    let pairs = frame_pairs(trajs, cfg.stride);
    if pairs.is_empty() {
        return Err(invalid!("no frame pairs at stride {}", cfg.stride));
    }
    let mut total = 0.0;
    for p in &pairs {
        let t = &trajs[p.traj];
        let input = stats.normalize_state(&t.frames[p.input])?;
        let target = stats.normalize_state(&t.frames[p.target])?;
        total += compute_loss(&model_forward(store, cfg, &input)?, &target, cfg.task)?;
    }
    Ok(total / pairs.len() as f64)
}

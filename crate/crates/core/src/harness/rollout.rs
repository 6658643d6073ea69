//! Autoregressive prediction from a single initial frame.

use serde::{Deserialize, Serialize};

use super::evaluate::{denormalize_prediction, QuantityErrors};
use super::metrics::MetricRow;
use crate::data_io::{ChannelSpec, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, NormStats, SystemState};
use crate::model::{apply_boundary_mask, model_forward, BoundaryMask, ModelConfig, Prediction};
use crate::tensor_core::params::ParameterStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub step: usize,
    /// Channel rows followed by position rows.
    pub rows: Vec<MetricRow>,
    /// Mean RMSE over all rows.
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutReport {
    pub trajectory: String,
    pub requested_steps: usize,
    pub curve: Vec<RolloutStep>,
    /// Per-quantity errors averaged over the completed steps.
    pub rmse_all: Vec<MetricRow>,
    /// Mean of the per-step `mean_rmse`.
    pub mean_rmse_all: f64,
    /// First step whose prediction left the finite range.
    pub failed_at: Option<usize>,
}

fn finite(p: &Prediction<f64>) -> bool {
    Domain::ALL.iter().all(|&d| {
        let o = p.domain(d);
        o.positions.all_finite() && o.quantities.all_finite()
    })
}

/// Feed each prediction back as the next input, starting from frame `start`,
/// for `steps` steps of `cfg.stride` frames. Masked points keep their input
/// positions. Returns predicted frames in original units and the error curve.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    store: &ParameterStore<f64>,
    cfg: &ModelConfig,
    stats: &NormStats,
    spec: &ChannelSpec,
    traj: &Trajectory,
    start: usize,
    steps: usize,
    mask: Option<&BoundaryMask>,
) -> Result<(Vec<SystemState<f64>>, RolloutReport)> {
    let window = RolloutWindow {
        start,
        steps,
        stride: cfg.stride,
    };
    rollout_with(stats, spec, traj, window, mask, |x| model_forward(store, cfg, x))
}

/// Frames visited by a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutWindow {
    pub start: usize,
    pub steps: usize,
    pub stride: usize,
}

/// [`rollout`] for any predictor acting on normalized states.
pub fn rollout_with<F>(
    stats: &NormStats,
    spec: &ChannelSpec,
    traj: &Trajectory,
    window: RolloutWindow,
    mask: Option<&BoundaryMask>,
    mut predictor: F,
) -> Result<(Vec<SystemState<f64>>, RolloutReport)>
where
    F: FnMut(&SystemState<f64>) -> Result<Prediction<f64>>,
{
    let RolloutWindow { start, steps, stride } = window;
    if steps == 0 || stride == 0 {
        return Err(invalid!("a rollout needs at least one step of positive stride"));
    }
    let last = start + steps * stride;
    if last >= traj.len() {
        return Err(invalid!(
            "`{}` has {} frames; {steps} steps of stride {stride} from frame {start} need {}",
            traj.id,
            traj.len(),
            last + 1
        ));
    }
    let mut input = stats.normalize_state(&traj.frames[start])?;
    let mut predicted = Vec::with_capacity(steps);
    let mut curve = Vec::with_capacity(steps);
    let mut failed_at = None;
    for k in 1..=steps {
        let mut pred = match predictor(&input) {
            Ok(p) => p,
            Err(Error::NonFinite(_)) => {
                failed_at = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(m) = mask {
            pred = apply_boundary_mask(&pred, &input, m)?;
        }
        if !finite(&pred) {
            failed_at = Some(k);
            break;
        }
        let target = &traj.frames[start + k * stride];
        let physical = denormalize_prediction(stats, &pred)?;
        let mut errors = QuantityErrors::new(spec);
        errors.add(target, &physical)?;
        let mut rows = errors.channel_rows(spec);
        rows.extend(errors.position_rows());
        let mean_rmse = rows.iter().map(|r| r.rmse).sum::<f64>() / rows.len() as f64;
        curve.push(RolloutStep { step: k, rows, mean_rmse });
        predicted.push(physical.into_state(target, target.time));
        input = pred.into_state(&input, target.time);
    }
    let rmse_all = average_rows(&curve);
    let mean_rmse_all = if curve.is_empty() {
        f64::NAN
    } else {
        curve.iter().map(|s| s.mean_rmse).sum::<f64>() / curve.len() as f64
    };
    Ok((
        predicted,
        RolloutReport {
            trajectory: traj.id.clone(),
            requested_steps: steps,
            curve,
            rmse_all,
            mean_rmse_all,
            failed_at,
        },
    ))
}

fn average_rows(curve: &[RolloutStep]) -> Vec<MetricRow> {
    let Some(first) = curve.first() else {
        return Vec::new();
    };
    let n = curve.len() as f64;
    first
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| MetricRow {
            relative_l2: curve.iter().map(|s| s.rows[i].relative_l2).sum::<f64>() / n,
            rmse: curve.iter().map(|s| s.rows[i].rmse).sum::<f64>() / n,
            absolute: curve.iter().any(|s| s.rows[i].absolute),
            ..r.clone()
        })
        .collect()
}

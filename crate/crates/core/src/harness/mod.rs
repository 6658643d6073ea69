//! Training, evaluation, rollouts and attention inspection.

mod attention;
mod config;
mod evaluate;
mod metrics;
mod optim;
mod rollout;
mod train;

pub use attention::{dump_attention, probe_logits, AttentionDump, Block};
pub use config::{sidecar_path, RunConfig, TrainConfig};
pub use evaluate::{
    denormalize_prediction, evaluate_trajectories, evaluate_with, frame_pairs, mean_loss, predict, MetricReport, Pair,
    QuantityErrors,
};
pub use metrics::{relative_l2, relative_l2_flagged, rmse_metric, ErrorAccumulator, MetricRow};
pub use optim::{Adam, BETA1, BETA2, EPSILON};
pub use rollout::{rollout, rollout_with, RolloutReport, RolloutStep, RolloutWindow};
pub use train::{train_loop, LogRow, TrainData, TrainOutcome, TrainOutputs};

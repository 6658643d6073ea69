//! Trajectory files, dataset manifests, splits and normalization statistics.

mod format;
mod generate;
mod manifest;

pub use format::{
    read_trajectory, read_trajectory_from, write_trajectory, write_trajectory_to, FrameLayout,
    Trajectory, FORMAT_VERSION, HEADER_BYTES, MAGIC,
};
pub use generate::{
    gen_piston_dataset, gen_potential_dataset, piston_channels, piston_sample,
    potential_channels, LogRange, PistonDatasetSpec, POTENTIAL_SPEED,
};
pub use manifest::{
    assign_splits, build_manifest, compute_norm_stats, index_path, manifest_path, Channel,
    ChannelSpec, Manifest, Split, SplitRatios, Splits, TrajectoryEntry, INDEX_FILE,
    MANIFEST_FILE, MANIFEST_VERSION,
};

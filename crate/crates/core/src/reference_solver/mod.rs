//! Classical ground truth: a partitioned piston–gas solver on a moving mesh
//! and closed-form cylinder flow samples.

mod piston;
mod potential;

pub use piston::{
    damped_oscillator, frame, mesh_motion_1d, partitioned_step, run_piston, simulate_piston,
    PistonParams, PistonRun, PistonState, StepReport,
};
pub use potential::{
    bernoulli_pressure, cylinder_velocity, gen_potential_flow, PotentialParams,
};

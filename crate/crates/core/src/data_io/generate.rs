//! Randomized datasets from the reference solvers.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::format::Trajectory;
use super::manifest::{index_path, Channel, ChannelSpec, Manifest};
use crate::error::{invalid, Result};
use crate::reference_solver::{gen_potential_flow, simulate_piston, PistonParams, PotentialParams};

/// Closed interval sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRange(pub f64, pub f64);

impl LogRange {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.0 == self.1 {
            return self.0;
        }
        (rng.gen_range(self.0.ln()..=self.1.ln())).exp()
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.0..=self.1).contains(&v)
    }
}

/// Parameter ranges of the piston dataset. Out-of-distribution trajectories
/// draw their stiffness from `ood_stiffness`, which lies above `stiffness`.
#[derive(Debug, Clone, PartialEq)]
pub struct PistonDatasetSpec {
    pub trajectories: usize,
    pub seed: u64,
    pub steps: usize,
    pub dt: f64,
    /// Fraction of trajectories drawn out of distribution.
    pub ood_fraction: f64,
    pub stiffness: LogRange,
    pub ood_stiffness: LogRange,
    pub mass: LogRange,
    pub damping: LogRange,
    pub displacement: LogRange,
    pub sound_speed: LogRange,
    pub dim: usize,
}

impl Default for PistonDatasetSpec {
    fn default() -> Self {
        Self {
            trajectories: 10,
            seed: 0,
            steps: 200,
            dt: 2.5e-3,
            ood_fraction: 0.0,
            stiffness: LogRange(50.0, 200.0),
            ood_stiffness: LogRange(300.0, 450.0),
            mass: LogRange(0.5, 2.0),
            damping: LogRange(0.01, 0.5),
            displacement: LogRange(0.005, 0.02),
            sound_speed: LogRange(5.0, 10.0),
            dim: 2,
        }
    }
}

pub fn piston_channels() -> ChannelSpec {
    let p = Channel::new("pressure", "Pa");
    let v = Channel::new("velocity", "m/s");
    let s = Channel::new("stress", "Pa");
    ChannelSpec {
        fluid: vec![p.clone(), v.clone()],
        solid: vec![s.clone()],
        interface: vec![p, v, s],
        conditions: vec![
            Channel::new("stiffness", "N/m"),
            Channel::new("mass", "kg"),
            Channel::new("damping", "N s/m"),
            Channel::new("sound_speed", "m/s"),
        ],
    }
}

/// Parameters of trajectory `i`; the first `round(n·ood_fraction)` are out of distribution.
pub fn piston_sample(spec: &PistonDatasetSpec, i: usize) -> (PistonParams, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let n_ood = (spec.trajectories as f64 * spec.ood_fraction).round() as usize;
    let ood = i < n_ood;
    let stiffness = if ood { spec.ood_stiffness } else { spec.stiffness }.sample(&mut rng);
    let params = PistonParams {
        stiffness,
        mass: spec.mass.sample(&mut rng),
        damping: spec.damping.sample(&mut rng),
        initial_displacement: spec.displacement.sample(&mut rng),
        sound_speed: spec.sound_speed.sample(&mut rng),
        dt: spec.dt,
        steps: spec.steps,
        dim: spec.dim,
        ..PistonParams::default()
    };
    (params, ood)
}

/// Simulate the dataset into `dir` and write its index.
pub fn gen_piston_dataset(dir: &Path, spec: &PistonDatasetSpec) -> Result<Manifest> {
    if spec.trajectories == 0 {
        return Err(invalid!("at least one trajectory is required"));
    }
    if !(0.0..=1.0).contains(&spec.ood_fraction) {
        return Err(invalid!("ood fraction must lie in [0, 1]"));
    }
    if spec.ood_stiffness.0 <= spec.stiffness.1 && spec.ood_stiffness.1 >= spec.stiffness.0 {
        return Err(invalid!("out-of-distribution stiffness range overlaps the training range"));
    }
    fs::create_dir_all(dir)?;
    let mut m = Manifest::new(spec.dim, spec.dt, piston_channels());
    for i in 0..spec.trajectories {
        let (params, ood) = piston_sample(spec, i);
        let (frames, _) = simulate_piston(&params)?;
        let traj = Trajectory::new(format!("piston_{i:04}"), frames, params.conditions())?;
        m.add(dir, &traj, ood)?;
    }
    m.save(&index_path(dir))?;
    Ok(m)
}

pub fn potential_channels(dim: usize) -> ChannelSpec {
    let axes = ["x", "y", "z"];
    let mut fluid: Vec<Channel> = (0..dim).map(|i| Channel::new(&format!("velocity_{}", axes[i]), "m/s")).collect();
    fluid.push(Channel::new("pressure", "Pa"));
    let solid: Vec<Channel> = (0..dim).map(|i| Channel::new(&format!("displacement_{}", axes[i]), "m")).collect();
    let interface = fluid.iter().chain(&solid).cloned().collect();
    ChannelSpec {
        fluid,
        solid,
        interface,
        conditions: vec![Channel::new("free_stream_speed", "m/s")],
    }
}

/// Free-stream speed range of the steady samples.
pub const POTENTIAL_SPEED: LogRange = LogRange(0.5, 2.0);

/// Steady samples as two-frame trajectories (input geometry, solution).
pub fn gen_potential_dataset(dir: &Path, samples: usize, seed: u64, dim: usize) -> Result<Manifest> {
    if samples == 0 {
        return Err(invalid!("at least one sample is required"));
    }
    fs::create_dir_all(dir)?;
    let mut m = Manifest::new(dim, 0.0, potential_channels(dim));
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let params = PotentialParams {
            speed: POTENTIAL_SPEED.sample(&mut rng),
            dim,
            ..PotentialParams::default()
        };
        let (input, target) = gen_potential_flow(&params, rng.gen())?;
        let traj = Trajectory::new(format!("potential_{i:04}"), vec![input, target], vec![params.speed])?;
        m.add(dir, &traj, false)?;
    }
    m.save(&index_path(dir))?;
    Ok(m)
}

//! Steady inviscid flow past a circular cylinder with a rigidly displaced
//! core: closed-form samples for the steady-state task.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{DomainObservation, SystemState};
use crate::tensor_core::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Free-stream speed (m/s).
    pub speed: f64,
    /// Cylinder radius (m).
    pub radius: f64,
    /// Displacement per unit dynamic pressure (m/Pa).
    pub compliance: f64,
    pub density: f64,
    /// Far-field pressure (Pa).
    pub far_pressure: f64,
    /// 2, or 3 for an extrusion along `z` with constant fields.
    pub dim: usize,
    pub fluid_points: usize,
    pub solid_points: usize,
    pub interface_points: usize,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            speed: 1.0,
            radius: 1.0,
            compliance: 0.05,
            density: 1.0,
            far_pressure: 0.0,
            dim: 2,
            fluid_points: 64,
            solid_points: 8,
            interface_points: 16,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(self.speed >= 0.0) || !(self.density > 0.0) {
            return Err(invalid!("radius and density must be positive, speed nonnegative"));
        }
        if !(2..=3).contains(&self.dim) {
            return Err(invalid!("potential flow samples are 2- or 3-dimensional"));
        }
        if self.fluid_points == 0 || self.solid_points == 0 || self.interface_points == 0 {
            return Err(invalid!("every domain needs at least one point"));
        }
        Ok(())
    }

    pub fn fluid_channels(&self) -> usize {
        self.dim + 1
    }
}

/// Velocity of the cylinder flow at `(x, y)`, from `u − iv = U(1 − R²/z²)`.
pub fn cylinder_velocity(speed: f64, radius: f64, x: f64, y: f64) -> Result<[f64; 2]> {
    let r2 = x * x + y * y;
    if r2 <= radius * radius * (1.0 - 1e-12) {
        return Err(invalid!("point ({x}, {y}) lies inside the cylinder"));
    }
    let theta = y.atan2(x);
    let a = radius * radius / r2;
    Ok([
        speed * (1.0 - a * (2.0 * theta).cos()),
        -speed * a * (2.0 * theta).sin(),
    ])
}

/// Bernoulli pressure for local velocity `vel`.
pub fn bernoulli_pressure(p: &PotentialParams, vel: [f64; 2]) -> f64 {
    p.far_pressure + 0.5 * p.density * (p.speed * p.speed - vel[0] * vel[0] - vel[1] * vel[1])
}

fn embed(p: &PotentialParams, xy: [f64; 2], z: f64) -> Vec<f64> {
    if p.dim == 3 {
        vec![xy[0], xy[1], z]
    } else {
        xy.to_vec()
    }
}

fn velocity_channels(p: &PotentialParams, v: [f64; 2]) -> Vec<f64> {
    if p.dim == 3 {
        vec![v[0], v[1], 0.0]
    } else {
        v.to_vec()
    }
}

/// One `(input, target)` pair. The input carries the undeformed geometry with
/// zero fields and the free-stream speed as its condition; the target carries
/// velocity and pressure in the fluid, the rigid core displacement in the
/// solid, and both at the interface.
pub fn gen_potential_flow(p: &PotentialParams, seed: u64) -> Result<(SystemState<f64>, SystemState<f64>)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p.dim;
    let r = p.radius;
    let z = |rng: &mut ChaCha8Rng| if d == 3 { rng.gen_range(0.0..2.0 * r) } else { 0.0 };
    let shift = p.compliance * 0.5 * p.density * p.speed * p.speed;
    let mut disp = vec![0.0; d];
    disp[0] = shift;

    let (mut fp, mut fq) = (Vec::new(), Vec::new());
    for _ in 0..p.fluid_points {
        // area-uniform in the annulus R < r < 4R
        let rad = (r * r + rng.gen::<f64>() * 15.0 * r * r).sqrt().max(r * (1.0 + 1e-9));
        let th = rng.gen_range(-PI..PI);
        let xy = [rad * th.cos(), rad * th.sin()];
        let vel = cylinder_velocity(p.speed, r, xy[0], xy[1])?;
        fp.extend(embed(p, xy, z(&mut rng)));
        fq.extend(velocity_channels(p, vel));
        fq.push(bernoulli_pressure(p, vel));
    }
    let (mut sp, mut sq) = (Vec::new(), Vec::new());
    for i in 0..p.solid_points {
        let th = 2.0 * PI * i as f64 / p.solid_points as f64;
        sp.extend(embed(p, [0.5 * r * th.cos(), 0.5 * r * th.sin()], z(&mut rng)));
        sq.extend(&disp);
    }
    let (mut bp, mut bq) = (Vec::new(), Vec::new());
    for _ in 0..p.interface_points {
        let th = rng.gen_range(-PI..PI);
        let xy = [r * th.cos(), r * th.sin()];
        let vel = cylinder_velocity(p.speed, r, xy[0], xy[1])?;
        bp.extend(embed(p, xy, z(&mut rng)));
        bq.extend(velocity_channels(p, vel));
        bq.push(bernoulli_pressure(p, vel));
        bq.extend(&disp);
    }

    let (nf, ns, nb) = (p.fluid_points, p.solid_points, p.interface_points);
    let (cf, cs) = (d + 1, d);
    let positions = |n: usize, data: &[f64]| Tensor::matrix(n, d, data.to_vec());
    let displaced = |n: usize, data: &[f64]| {
        let mut v = data.to_vec();
        for row in v.chunks_mut(d) {
            row[0] += shift;
        }
        Tensor::matrix(n, d, v)
    };
    let input = SystemState::new(
        DomainObservation::new(positions(nf, &fp)?, Tensor::zeros(&[nf, cf]))?,
        DomainObservation::new(positions(ns, &sp)?, Tensor::zeros(&[ns, cs]))?,
        DomainObservation::new(positions(nb, &bp)?, Tensor::zeros(&[nb, cf + cs]))?,
        vec![p.speed],
        0.0,
    )?;
    let target = SystemState::new(
        DomainObservation::new(positions(nf, &fp)?, Tensor::matrix(nf, cf, fq)?)?,
        DomainObservation::new(displaced(ns, &sp)?, Tensor::matrix(ns, cs, sq)?)?,
        DomainObservation::new(displaced(nb, &bp)?, Tensor::matrix(nb, cf + cs, bq)?)?,
        vec![p.speed],
        0.0,
    )?;
    Ok((input, target))
}

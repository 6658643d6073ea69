//! Gas column closed by a spring-mounted piston: linear acoustics on a moving
//! mesh coupled to a damped oscillator through a relaxed fixed-point loop.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{DomainObservation, SystemState};
use crate::tensor_core::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PistonParams {
    /// Rest length of the gas column (m).
    pub rest_length: f64,
    /// Piston mass (kg).
    pub mass: f64,
    /// Spring stiffness (N/m).
    pub stiffness: f64,
    /// Viscous damping (N·s/m).
    pub damping: f64,
    /// Piston face area (m²).
    pub area: f64,
    /// Reference gas density (kg/m³).
    pub density: f64,
    /// Sound speed (m/s).
    pub sound_speed: f64,
    /// Reference pressure (Pa); frames report pressure relative to it.
    pub ref_pressure: f64,
    /// Initial piston displacement (m).
    pub initial_displacement: f64,
    /// Fluid cells along the column.
    pub cells: usize,
    /// Time step (s).
    pub dt: f64,
    /// Time steps; `steps + 1` frames are emitted.
    pub steps: usize,
    /// Absolute tolerance on the interface displacement between coupling iterates (m).
    pub tol: f64,
    /// Under-relaxation factor of the interface load.
    pub omega: f64,
    pub max_subiters: usize,
    /// Spatial dimension of emitted frames: 1, or 2 for a strip of two lateral rows.
    pub dim: usize,
}

impl Default for PistonParams {
    fn default() -> Self {
        Self {
            rest_length: 1.0,
            mass: 1.0,
            stiffness: 100.0,
            damping: 0.1,
            area: 1.0,
            density: 1.0,
            sound_speed: 8.0,
            ref_pressure: 1.0e5,
            initial_displacement: 0.01,
            cells: 16,
            dt: 2.5e-3,
            steps: 200,
            tol: 1e-13,
            omega: 0.5,
            max_subiters: 50,
            dim: 2,
        }
    }
}

impl PistonParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rest_length", self.rest_length),
            ("mass", self.mass),
            ("stiffness", self.stiffness),
            ("area", self.area),
            ("density", self.density),
            ("sound_speed", self.sound_speed),
            ("ref_pressure", self.ref_pressure),
            ("dt", self.dt),
            ("tol", self.tol),
        ];
        for (name, v) in positive {
            if v <= 0.0 || !v.is_finite() {
                return Err(invalid!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(invalid!("damping must be nonnegative, got {}", self.damping));
        }
        if self.initial_displacement.abs() >= self.rest_length {
            return Err(invalid!("|initial_displacement| must be below rest_length"));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(invalid!("omega must lie in (0, 1], got {}", self.omega));
        }
        if self.cells < 3 {
            return Err(invalid!("at least 3 fluid cells are required"));
        }
        if self.max_subiters == 0 {
            return Err(invalid!("max_subiters must be positive"));
        }
        let cfl = 0.5 * (self.rest_length - self.initial_displacement.abs()) / self.cells as f64 / self.sound_speed;
        if self.dt > cfl {
            return Err(invalid!("dt {} exceeds the acoustic limit {cfl:.3e}", self.dt));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(invalid!("piston frames are 1- or 2-dimensional"));
        }
        Ok(())
    }

    /// Period of the piston oscillating alone.
    pub fn dry_period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.mass / self.stiffness).sqrt()
    }

    /// Condition vector attached to every frame: stiffness, mass, damping, sound speed.
    pub fn conditions(&self) -> Vec<f64> {
        vec![self.stiffness, self.mass, self.damping, self.sound_speed]
    }
}

/// Nodes at fixed fractions `ξ` of a column of length `length` moving at
/// `rate = dL/dt`: positions `ξ·L` and mesh velocities `ξ·rate`, the 1D
/// harmonic extension of the boundary motion.
pub fn mesh_motion_1d(fractions: &[f64], length: f64, rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(length > 0.0) {
        return Err(invalid!("column length must be positive, got {length}"));
    }
    Ok((
        fractions.iter().map(|&xi| xi * length).collect(),
        fractions.iter().map(|&xi| xi * rate).collect(),
    ))
}

/// Piston and gas at one instant. Velocities live on the `cells + 1` nodes,
/// pressures (relative to the reference) on the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct PistonState {
    pub time: f64,
    pub displacement: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// Interface pressure the piston was loaded with.
    pub load_pressure: f64,
    pub node_velocity: Vec<f64>,
    pub cell_pressure: Vec<f64>,
}

impl PistonState {
    /// At rest apart from the displaced piston.
    pub fn initial(params: &PistonParams) -> Self {
        let s0 = params.initial_displacement;
        Self {
            time: 0.0,
            displacement: s0,
            velocity: 0.0,
            acceleration: -params.stiffness * s0 / params.mass,
            load_pressure: 0.0,
            node_velocity: vec![0.0; params.cells + 1],
            cell_pressure: vec![0.0; params.cells],
        }
    }

    pub fn length(&self, params: &PistonParams) -> f64 {
        params.rest_length + self.displacement
    }

    /// Pressure in the cell adjacent to the piston face.
    pub fn interface_pressure(&self) -> f64 {
        self.cell_pressure[self.cell_pressure.len() - 1]
    }

    /// Pressure at node `j`: mean of the adjacent cells, extrapolated at the ends.
    pub fn node_pressure(&self, j: usize) -> f64 {
        let p = &self.cell_pressure;
        let n = p.len();
        match j {
            0 => 1.5 * p[0] - 0.5 * p[1],
            j if j == n => self.interface_pressure(),
            j => 0.5 * (p[j - 1] + p[j]),
        }
    }

    /// Rate at which the moving face sweeps acoustic energy into the column,
    /// `A·ṡ·(p²/(2ρc²) + ρṡ²/2)` at the face. Linear acoustics on a moving
    /// domain does not conserve the total energy; this is the imbalance.
    pub fn energy_flux(&self, params: &PistonParams) -> f64 {
        let p = self.interface_pressure();
        let rc2 = params.density * params.sound_speed * params.sound_speed;
        let v = self.velocity;
        params.area * v * (p * p / (2.0 * rc2) + params.density * v * v / 2.0)
    }

    /// Kinetic plus spring energy of the piston and acoustic energy of the gas.
    pub fn energy(&self, params: &PistonParams) -> f64 {
        let n = params.cells;
        let dx = self.length(params) / n as f64;
        let rc2 = params.density * params.sound_speed * params.sound_speed;
        let potential: f64 = self.cell_pressure.iter().map(|p| p * p / (2.0 * rc2)).sum();
        let kinetic: f64 = self
            .node_velocity
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let w = if j == 0 || j == n { 0.0 } else { 1.0 };
                w * params.density * v * v / 2.0
            })
            .sum();
        0.5 * params.mass * self.velocity * self.velocity
            + 0.5 * params.stiffness * self.displacement * self.displacement
            + params.area * dx * (potential + kinetic)
    }
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub residuals: Vec<f64>,
}

impl StepReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }
}

/// Average-acceleration (trapezoidal) update of the piston under interface pressure `load`.
fn advance_solid(params: &PistonParams, s: &PistonState, load: f64) -> (f64, f64, f64) {
    let (m, k, c, dt) = (params.mass, params.stiffness, params.damping, params.dt);
    let force = params.area * load;
    let rhs = force
        - k * (s.displacement + dt * s.velocity + dt * dt / 4.0 * s.acceleration)
        - c * (s.velocity + dt / 2.0 * s.acceleration);
    let a = rhs / (m + c * dt / 2.0 + k * dt * dt / 4.0);
    let v = s.velocity + dt / 2.0 * (s.acceleration + a);
    let x = s.displacement + dt * s.velocity + dt * dt / 4.0 * (s.acceleration + a);
    (x, v, a)
}

/// Kick–drift–kick update of the gas on the moving mesh: half a velocity
/// step from the old pressures, a full pressure step from the mid-step
/// velocities, and the second half velocity step from the new pressures.
/// Returns `(node velocities, cell pressures)`.
fn advance_fluid(
    params: &PistonParams,
    s: &PistonState,
    new_displacement: f64,
    new_velocity: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = params.cells;
    let nf = n as f64;
    let dt = params.dt;
    let (rho, c2) = (params.density, params.sound_speed * params.sound_speed);
    let len0 = s.length(params);
    let len1 = params.rest_length + new_displacement;
    let rate = (len1 - len0) / dt;
    let (dx0, dx1) = (len0 / nf, len1 / nf);
    let dx_mid = 0.5 * (dx0 + dx1);

    // Advection terms are centered in time: the second half step advects the
    // extrapolated end velocity and the pressure step a predicted mid-step pressure.
    let kick = |v: &[f64], p: &[f64], advected: &[f64], dx: f64, boundary: f64| {
        let mut out = vec![0.0; n + 1];
        for j in 1..n {
            let w = j as f64 / nf * rate;
            let dpdx = (p[j] - p[j - 1]) / dx;
            let dvdx = (advected[j + 1] - advected[j - 1]) / (2.0 * dx);
            out[j] = v[j] + 0.5 * dt * (-dpdx / rho + w * dvdx);
        }
        out[n] = boundary;
        out
    };
    let divergence = |v: &[f64], i: usize| (v[i + 1] - v[i]) / dx_mid;

    let (v, p) = (&s.node_velocity, &s.cell_pressure);
    let v_half = kick(v, p, v, dx0, 0.5 * (s.velocity + new_velocity));
    let p_mid: Vec<f64> = (0..n).map(|i| p[i] - 0.5 * dt * rho * c2 * divergence(&v_half, i)).collect();
    let mut p_new = vec![0.0; n];
    for i in 0..n {
        let w = (i as f64 + 0.5) / nf * rate;
        let dpdx = if i == 0 {
            (p_mid[1] - p_mid[0]) / dx_mid
        } else if i == n - 1 {
            (p_mid[n - 1] - p_mid[n - 2]) / dx_mid
        } else {
            (p_mid[i + 1] - p_mid[i - 1]) / (2.0 * dx_mid)
        };
        p_new[i] = p[i] + dt * (-rho * c2 * divergence(&v_half, i) + w * dpdx);
    }
    let v_end: Vec<f64> = v_half.iter().zip(v).map(|(h, o)| 2.0 * h - o).collect();
    let v_new = kick(&v_half, &p_new, &v_end, dx1, new_velocity);
    (v_new, p_new)
}

/// Advance one time step by relaxed fixed-point iteration between the piston
/// and the gas. Each iteration (1) moves the piston under the current load,
/// (2) moves the mesh, (3) advances the gas with the piston velocity as its
/// boundary value, and (4) measures the change of the piston displacement
/// against the previous iterate. The load is then relaxed towards the gas
/// pressure at the face by `omega`.
pub fn partitioned_step(params: &PistonParams, state: &PistonState, step: usize) -> Result<(PistonState, StepReport)> {
    let mut load = state.interface_pressure();
    let mut previous = state.displacement;
    let mut residuals = Vec::new();
    for _ in 0..params.max_subiters {
        let (x, v, a) = advance_solid(params, state, load);
        let length = params.rest_length + x;
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::MeshInversion { step, length });
        }
        let (node_velocity, cell_pressure) = advance_fluid(params, state, x, v);
        let r = (x - previous).abs();
        residuals.push(r);
        if !r.is_finite() {
            return Err(Error::Divergence { step, residual: r });
        }
        let next = PistonState {
            time: state.time + params.dt,
            displacement: x,
            velocity: v,
            acceleration: a,
            load_pressure: load,
            node_velocity,
            cell_pressure,
        };
        if r < params.tol {
            return Ok((next, StepReport { residuals }));
        }
        load = params.omega * next.interface_pressure() + (1.0 - params.omega) * load;
        previous = x;
    }
    Err(Error::Divergence {
        step,
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

/// Full solver output.
#[derive(Debug, Clone)]
pub struct PistonRun {
    pub states: Vec<PistonState>,
    pub reports: Vec<StepReport>,
}

impl PistonRun {
    pub fn displacements(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.displacement).collect()
    }

    pub fn energies(&self, params: &PistonParams) -> Vec<f64> {
        self.states.iter().map(|s| s.energy(params)).collect()
    }

    /// Largest relative deviation of the energy from its initial value.
    pub fn energy_drift(&self, params: &PistonParams) -> f64 {
        let e = self.energies(params);
        e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max) / e[0]
    }

    /// Largest relative residual of the energy balance: energy change minus the
    /// face flux and damping work, integrated by the trapezoidal rule.
    pub fn energy_budget_residual(&self, params: &PistonParams) -> f64 {
        let e = self.energies(params);
        let rate = |s: &PistonState| s.energy_flux(params) - params.damping * s.velocity * s.velocity;
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for (k, w) in self.states.windows(2).enumerate() {
            acc += 0.5 * params.dt * (rate(&w[0]) + rate(&w[1]));
            worst = worst.max((e[k + 1] - e[0] - acc).abs());
        }
        worst / e[0]
    }
}

pub fn run_piston(params: &PistonParams) -> Result<PistonRun> {
    params.validate()?;
    let mut state = PistonState::initial(params);
    let mut states = Vec::with_capacity(params.steps + 1);
    let mut reports = Vec::with_capacity(params.steps);
    states.push(state.clone());
    for step in 1..=params.steps {
        let (next, report) = partitioned_step(params, &state, step)?;
        check_mesh(params, &next, step)?;
        states.push(next.clone());
        reports.push(report);
        state = next;
    }
    Ok(PistonRun { states, reports })
}

fn check_mesh(params: &PistonParams, s: &PistonState, step: usize) -> Result<()> {
    let length = s.length(params);
    let fractions: Vec<f64> = (0..=params.cells).map(|j| j as f64 / params.cells as f64).collect();
    let (x, _) = mesh_motion_1d(&fractions, length, 0.0).map_err(|_| Error::MeshInversion { step, length })?;
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::MeshInversion { step, length });
    }
    Ok(())
}

/// Lateral coordinates of the strip rows in two dimensions.
fn rows(params: &PistonParams) -> Vec<f64> {
    if params.dim == 1 {
        vec![0.0]
    } else {
        let half = 0.25 * params.area.sqrt();
        vec![-half, half]
    }
}

fn point(params: &PistonParams, x: f64, y: f64) -> Vec<f64> {
    if params.dim == 1 {
        vec![x]
    } else {
        vec![x, y]
    }
}

/// Observation of one solver state. Fluid points are the interior nodes
/// (pressure, velocity); the solid is four collocated points at the piston
/// face carrying the spring stress; the interface sits at the face with
/// (pressure, velocity, stress).
pub fn frame(params: &PistonParams, s: &PistonState) -> Result<SystemState<f64>> {
    let n = params.cells;
    let d = params.dim;
    let length = s.length(params);
    let lateral = rows(params);
    let stress = -params.stiffness * s.displacement / params.area;

    let mut fp = Vec::new();
    let mut fq = Vec::new();
    for &y in &lateral {
        for j in 1..n {
            fp.extend(point(params, j as f64 / n as f64 * length, y));
            fq.extend([s.node_pressure(j), s.node_velocity[j]]);
        }
    }
    let nf = (n - 1) * lateral.len();
    let fluid = DomainObservation::new(Tensor::matrix(nf, d, fp)?, Tensor::matrix(nf, 2, fq)?)?;

    let sp: Vec<f64> = (0..4).flat_map(|_| point(params, length, 0.0)).collect();
    let solid = DomainObservation::new(Tensor::matrix(4, d, sp)?, Tensor::full(&[4, 1], stress))?;

    let mut bp = Vec::new();
    let mut bq = Vec::new();
    for &y in &lateral {
        bp.extend(point(params, length, y));
        bq.extend([s.interface_pressure(), s.velocity, stress]);
    }
    let nb = lateral.len();
    let interface = DomainObservation::new(Tensor::matrix(nb, d, bp)?, Tensor::matrix(nb, 3, bq)?)?;
    SystemState::new(fluid, solid, interface, params.conditions(), s.time)
}

/// Integrate and emit `steps + 1` frames.
pub fn simulate_piston(params: &PistonParams) -> Result<(Vec<SystemState<f64>>, PistonRun)> {
    let run = run_piston(params)?;
    let frames = run
        .states
        .iter()
        .map(|s| frame(params, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, run))
}

/// Displacement of a free damped oscillator released from rest at `s0`.
pub fn damped_oscillator(params: &PistonParams, t: f64) -> f64 {
    let s0 = params.initial_displacement;
    let wn = (params.stiffness / params.mass).sqrt();
    let zeta = params.damping / (2.0 * (params.stiffness * params.mass).sqrt());
    if zeta < 1.0 {
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * wn * t).exp();
        s0 * decay * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin())
    } else if zeta == 1.0 {
        s0 * (1.0 + wn * t) * (-wn * t).exp()
    } else {
        let r = wn * (zeta * zeta - 1.0).sqrt();
        let (r1, r2) = (-zeta * wn + r, -zeta * wn - r);
        s0 * (r1 * (r2 * t).exp() - r2 * (r1 * t).exp()) / (r1 - r2)
    }
}

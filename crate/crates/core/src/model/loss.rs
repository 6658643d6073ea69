use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Prediction, Task};
use crate::error::{invalid, shape_err, Result};
use crate::geometry::{Domain, SystemState};
use crate::tensor_core::graph::{Graph, Var};
use crate::tensor_core::tensor::Scalar;

/// Target norms below this are treated as zero and the error is reported unnormalized.
const ZERO_NORM: f64 = 1e-12;

/// Record the training loss: mean over domains of relative L2 (single-step,
/// steady-state) or RMSE (rollout) between stacked predictions and targets.
pub fn record_loss<T: Scalar>(
    g: &mut Graph<T>,
    outputs: &[Var; 3],
    target: &SystemState<T>,
    task: Task,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(3);
    for (i, d) in Domain::ALL.iter().enumerate() {
        let t = target.domain(*d).stacked();
        if g.value(outputs[i]).shape() != t.shape() {
            return Err(shape_err!(
                "{d} prediction {:?} vs target {:?}",
                g.value(outputs[i]).shape(),
                t.shape()
            ));
        }
        let n = t.rows();
        let tnorm = t.norm().as_f64();
        let tv = g.constant(t)?;
        let diff = g.sub(outputs[i], tv)?;
        let ss = g.sum_squares(diff)?;
        let term = match task {
            Task::Rollout => {
                let mean = g.scale(ss, T::of(1.0 / n as f64))?;
                g.sqrt(mean)?
            }
            Task::SingleStep | Task::SteadyState => {
                let norm = g.sqrt(ss)?;
                let denom = if tnorm > ZERO_NORM { tnorm } else { 1.0 };
                g.scale(norm, T::of(1.0 / denom))?
            }
        };
        terms.push(term);
    }
    let a = g.add(terms[0], terms[1])?;
    let total = g.add(a, terms[2])?;
    g.scale(total, T::of(1.0 / 3.0))
}

/// Plain evaluation of the loss in [`record_loss`].
pub fn compute_loss<T: Scalar>(pred: &Prediction<T>, target: &SystemState<T>, task: Task) -> Result<f64> {
    let mut total = 0.0;
    for d in Domain::ALL {
        let p = pred.domain(d).stacked();
        let t = target.domain(d).stacked();
        if p.shape() != t.shape() {
            return Err(shape_err!("{d} prediction {:?} vs target {:?}", p.shape(), t.shape()));
        }
        let ss: f64 = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let e = (a - b).as_f64();
                e * e
            })
            .sum();
        total += match task {
            Task::Rollout => (ss / t.rows() as f64).sqrt(),
            Task::SingleStep | Task::SteadyState => {
                let tn = t.norm().as_f64();
                ss.sqrt() / if tn > ZERO_NORM { tn } else { 1.0 }
            }
        };
    }
    Ok(total / 3.0)
}

/// Add i.i.d. zero-mean Gaussian noise of `variance` to every position and quantity.
pub fn inject_noise<T: Scalar>(state: &SystemState<T>, variance: f64, seed: u64) -> Result<SystemState<T>> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(invalid!("noise variance must be nonnegative, got {variance}"));
    }
    if variance == 0.0 {
        return Ok(state.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| invalid!("{e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = state.clone();
    for d in Domain::ALL {
        let obs = out.domain_mut(d);
        for t in [&mut obs.positions, &mut obs.quantities] {
            for v in t.data_mut() {
                *v += T::of(normal.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

/// Points whose positions are prescribed (zero displacement) during prediction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundaryMask {
    pub fluid: Vec<bool>,
    pub solid: Vec<bool>,
    pub interface: Vec<bool>,
}

impl BoundaryMask {
    pub fn none(counts: [usize; 3]) -> Self {
        Self {
            fluid: vec![false; counts[0]],
            solid: vec![false; counts[1]],
            interface: vec![false; counts[2]],
        }
    }

    pub fn domain(&self, d: Domain) -> &[bool] {
        match d {
            Domain::Fluid => &self.fluid,
            Domain::Solid => &self.solid,
            Domain::Interface => &self.interface,
        }
    }
}

/// Overwrite predicted positions of masked points with their input positions.
pub fn apply_boundary_mask<T: Scalar>(
    pred: &Prediction<T>,
    input: &SystemState<T>,
    mask: &BoundaryMask,
) -> Result<Prediction<T>> {
    let mut out = pred.clone();
    for d in Domain::ALL {
        let flags = mask.domain(d);
        let src = &input.domain(d).positions;
        let dst = &mut out.domain_mut(d).positions;
        if flags.len() != dst.rows() || src.shape() != dst.shape() {
            return Err(shape_err!(
                "{d}: mask of {} for {} predicted and {} input points",
                flags.len(),
                dst.rows(),
                src.rows()
            ));
        }
        let c = dst.cols();
        for (i, _) in flags.iter().enumerate().filter(|(_, &f)| f) {
            dst.data_mut()[i * c..(i + 1) * c].copy_from_slice(src.row(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainObservation;
    use crate::tensor_core::tensor::Tensor;

    fn rows_of(t: &Tensor<f64>) -> Vec<Vec<f64>> {
        (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
    }

    fn obs(n: usize, c: usize, v: f64) -> DomainObservation<f64> {
        DomainObservation::new(Tensor::full(&[n, 1], v), Tensor::full(&[n, c], v)).unwrap()
    }

    fn state(v: [f64; 3]) -> SystemState<f64> {
        SystemState::new(obs(3, 1, v[0]), obs(2, 1, v[1]), obs(2, 2, v[2]), vec![], 0.0).unwrap()
    }

    fn pred_of(s: &SystemState<f64>) -> Prediction<f64> {
        Prediction {
            fluid: s.fluid.clone(),
            solid: s.solid.clone(),
            interface: s.interface.clone(),
        }
    }

    #[test]
    fn loss_examples() {
        let t = state([1.0, 2.0, 3.0]);
        assert_eq!(compute_loss(&pred_of(&t), &t, Task::SingleStep).unwrap(), 0.0);
        // fluid exact, solid and interface scaled by 1.3 → relative error 0.3 each
        let p = state([1.0, 2.6, 3.9]);
        let l = compute_loss(&pred_of(&p), &t, Task::SingleStep).unwrap();
        assert!((l - 0.2).abs() < 1e-12);
        let t2 = state([2.0, 4.0, 6.0]);
        let p2 = state([2.0, 5.2, 7.8]);
        let l2 = compute_loss(&pred_of(&p2), &t2, Task::SingleStep).unwrap();
        assert!((l - l2).abs() < 1e-12);
    }

    #[test]
    fn recorded_loss_matches_plain() {
        let t = state([1.0, -2.0, 0.5]);
        let p = state([1.1, -1.5, 0.0]);
        for task in [Task::SingleStep, Task::Rollout] {
            let mut g = Graph::new();
            let outs = Domain::ALL.map(|d| g.constant(p.domain(d).stacked()).unwrap());
            let l = record_loss(&mut g, &outs, &t, task).unwrap();
            let plain = compute_loss(&pred_of(&p), &t, task).unwrap();
            assert!((g.value(l).item() - plain).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_properties() {
        let s = state([0.0, 0.0, 0.0]);
        assert_eq!(inject_noise(&s, 0.0, 1).unwrap(), s);
        assert_eq!(inject_noise(&s, 1e-3, 9).unwrap(), inject_noise(&s, 1e-3, 9).unwrap());
        assert_ne!(inject_noise(&s, 1e-3, 9).unwrap(), inject_noise(&s, 1e-3, 10).unwrap());
        assert!(inject_noise(&s, -1.0, 1).is_err());
    }

    #[test]
    fn mask_replaces_flagged_rows_only() {
        let input = state([1.0, 2.0, 3.0]);
        let pred = pred_of(&state([5.0, 6.0, 7.0]));
        let mut mask = BoundaryMask::none([3, 2, 2]);
        assert_eq!(apply_boundary_mask(&pred, &input, &mask).unwrap(), pred);
        mask.solid = vec![true, false];
        let out = apply_boundary_mask(&pred, &input, &mask).unwrap();
        assert_eq!(rows_of(&out.solid.positions), vec![vec![2.0], vec![6.0]]);
        assert_eq!(out.solid.quantities, pred.solid.quantities);
        assert_eq!(out.fluid, pred.fluid);
        mask.fluid.pop();
        assert!(apply_boundary_mask(&pred, &input, &mask).is_err());
    }
}

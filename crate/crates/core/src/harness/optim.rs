//! Adaptive-moment optimizer.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor_core::params::ParameterStore;
use crate::tensor_core::tensor::{Scalar, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected first and second moment estimates per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    step: u64,
    first: IndexMap<String, Tensor<T>>,
    second: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor<T>, &Tensor<T>)> {
        Some((self.first.get(name)?, self.second.get(name)?))
    }

    /// Apply one update from the accumulated gradients, then reset them.
    /// A non-finite gradient aborts before any parameter changes.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        for (name, e) in store.iter() {
            if e.trainable && !e.grad.all_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (name, e) in store.iter_mut() {
            if !e.trainable {
                continue;
            }
            let m = self
                .first
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(e.value.shape()));
            let v = self
                .second
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(e.value.shape()));
            let grads = e.grad.data();
            for (i, p) in e.value.data_mut().iter_mut().enumerate() {
                let g = grads[i].as_f64();
                let mi = BETA1 * m.data()[i].as_f64() + (1.0 - BETA1) * g;
                let vi = BETA2 * v.data()[i].as_f64() + (1.0 - BETA2) * g * g;
                m.data_mut()[i] = T::of(mi);
                v.data_mut()[i] = T::of(vi);
                let update = self.lr * (mi / c1) / ((vi / c2).sqrt() + EPSILON);
                *p = T::of(p.as_f64() - update);
            }
        }
        store.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64, g: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::vector(vec![v]).unwrap(), true).unwrap();
        s.accumulate_grad("w", &Tensor::vector(vec![g]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(1.5, 0.0);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut s).unwrap();
        assert_eq!(s.value("w").unwrap().data(), &[1.5]);
        let (m, v) = opt.moments("w").unwrap();
        assert_eq!((m.data()[0], v.data()[0]), (0.0, 0.0));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let mut s = scalar_store(0.0, g);
            let mut opt = Adam::new(1e-3);
            opt.step(&mut s).unwrap();
            // m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε)
            let expected = -1e-3 * g / (g.abs() + EPSILON);
            assert!((s.value("w").unwrap().data()[0] - expected).abs() < 1e-15);
            assert_eq!(s.grad("w").unwrap().data(), &[0.0]);
        }
    }

    #[test]
    fn moments_decay() {
        let mut s = scalar_store(0.0, 1.0);
        let mut opt = Adam::new(1e-3);
        opt.step(&mut s).unwrap();
        opt.step(&mut s).unwrap();
        let (m, v) = opt.moments("w").unwrap();
        assert!((m.data()[0] - 0.1 * 0.9).abs() < 1e-15);
        assert!((v.data()[0] - 0.001 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut s = scalar_store(2.0, f64::NAN);
        let mut opt = Adam::new(1e-3);
        assert!(opt.step(&mut s).is_err());
        assert_eq!(s.value("w").unwrap().data(), &[2.0]);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn frozen_entries_are_skipped() {
        let mut s = scalar_store(1.0, 1.0);
        s.get_mut("w").unwrap().trainable = false;
        Adam::new(0.1).step(&mut s).unwrap();
        assert_eq!(s.value("w").unwrap().data(), &[1.0]);
    }
}

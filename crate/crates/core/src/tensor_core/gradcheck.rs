//! Central finite-difference verification of recorded gradients.

use indexmap::IndexMap;

use super::double::DoubleF64;
use super::graph::{Graph, Var};
use super::params::ParameterStore;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Default perturbation for central differences at f64.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor in the relative error.
const REL_FLOOR: f64 = 1e-8;
/// `f64` differences agreeing to within this fraction of the tolerance are accepted as is.
const REFINE_FRACTION: f64 = 0.01;

/// Worst relative error per parameter.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    pub per_param: Vec<(String, f64)>,
    /// Worst error when every difference is taken in plain `f64`.
    pub f64_worst: f64,
    /// Entries re-measured in double-double arithmetic.
    pub refined: usize,
    /// Trainable entries checked.
    pub entries: usize,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst_param(&self) -> Option<&str> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n.as_str())
    }

    pub fn passed(&self) -> bool {
        self.per_param.iter().all(|(_, e)| *e <= self.tol)
    }
}

/// A scalar loss that can be recorded at any precision.
pub trait Objective {
    fn record<T: Scalar>(&mut self, g: &mut Graph<T>, params: &ParameterStore<T>) -> Result<Var>;
}

/// `|a − f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences of `loss_fn` with respect to every trainable entry of `params`.
pub fn finite_difference_grads<F>(
    mut loss_fn: F,
    params: &ParameterStore<f64>,
    step: f64,
) -> Result<IndexMap<String, Tensor<f64>>>
where
    F: FnMut(&ParameterStore<f64>) -> Result<f64>,
{
    let mut work = params.clone();
    let mut out = IndexMap::new();
    let names: Vec<String> = params
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let n = work.value(&name).map_or(0, Tensor::numel);
        let mut grad = Tensor::zeros(work.value(&name).unwrap().shape());
        for i in 0..n {
            let orig = work.value(&name).unwrap().data()[i];
            set_entry(&mut work, &name, i, orig + step);
            let plus = finite(loss_fn(&work)?)?;
            set_entry(&mut work, &name, i, orig - step);
            let minus = finite(loss_fn(&work)?)?;
            set_entry(&mut work, &name, i, orig);
            grad.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        out.insert(name, grad);
    }
    Ok(out)
}

/// Compare gradients held in `analytic` (the store's grad fields) against `numeric`.
pub fn compare_gradients(
    analytic: &ParameterStore<f64>,
    numeric: &IndexMap<String, Tensor<f64>>,
    tol: f64,
) -> GradCheckReport {
    let mut entries = 0;
    let per_param: Vec<(String, f64)> = numeric
        .iter()
        .map(|(name, fd)| {
            let ad = analytic.grad(name).expect("numeric grads come from the same store");
            entries += ad.numel();
            let worst = ad
                .data()
                .iter()
                .zip(fd.data())
                .map(|(&a, &f)| relative_error(a, f))
                .fold(0.0, f64::max);
            (name.clone(), worst)
        })
        .collect();
    let f64_worst = per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    GradCheckReport {
        tol,
        per_param,
        f64_worst,
        refined: 0,
        entries,
    }
}

fn loss_value<T: Scalar, O: Objective>(obj: &mut O, params: &ParameterStore<T>) -> Result<T> {
    let mut g = Graph::new();
    let l = obj.record(&mut g, params)?;
    let v = g.value(l).item();
    finite(v.as_f64())?;
    Ok(v)
}

/// Differentiate `obj` in `f64` and compare every trainable entry against
/// central differences with step [`FD_STEP`].
///
/// Differences are first taken in `f64`. Their rounding noise is about
/// `ε·|loss| / step ≈ 1e-11`, which swamps entries whose true gradient is
/// near the `1e-8` floor. Entries whose `f64` estimate is not within
/// `tol / 100` are re-measured with the same step in double-double
/// arithmetic, and that estimate is the one reported.
pub fn grad_check<O: Objective>(obj: &mut O, params: &ParameterStore<f64>, tol: f64) -> Result<GradCheckReport> {
    let mut store = params.clone();
    store.zero_grad();
    let mut g = Graph::new();
    let loss = obj.record(&mut g, &store)?;
    finite(g.value(loss).item())?;
    g.backward(loss, &mut store)?;

    let mut work = params.clone();
    let mut wide: Option<ParameterStore<DoubleF64>> = None;
    let (mut per_param, mut f64_worst, mut refined, mut entries) = (Vec::new(), 0.0f64, 0, 0);
    let names: Vec<String> = params
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let ad = store.grad(&name).unwrap().clone();
        let mut worst = 0.0f64;
        for (i, &a) in ad.data().iter().enumerate() {
            entries += 1;
            let orig = work.value(&name).unwrap().data()[i];
            set_entry(&mut work, &name, i, orig + FD_STEP);
            let plus = loss_value(obj, &work)?;
            set_entry(&mut work, &name, i, orig - FD_STEP);
            let minus = loss_value(obj, &work)?;
            set_entry(&mut work, &name, i, orig);
            let mut err = relative_error(a, (plus - minus) / (2.0 * FD_STEP));
            f64_worst = f64_worst.max(err);
            if err > REFINE_FRACTION * tol {
                let wide = wide.get_or_insert_with(|| params.cast());
                let w0 = DoubleF64::from_f64(orig);
                let h = DoubleF64::from_f64(FD_STEP);
                wide.get_mut(&name).unwrap().value.data_mut()[i] = w0 + h;
                let plus = loss_value(obj, wide)?;
                wide.get_mut(&name).unwrap().value.data_mut()[i] = w0 - h;
                let minus = loss_value(obj, wide)?;
                wide.get_mut(&name).unwrap().value.data_mut()[i] = w0;
                let fd = (plus - minus) / (h + h);
                err = relative_error(a, fd.as_f64());
                refined += 1;
            }
            worst = worst.max(err);
        }
        per_param.push((name, worst));
    }
    Ok(GradCheckReport {
        tol,
        per_param,
        f64_worst,
        refined,
        entries,
    })
}

fn set_entry(store: &mut ParameterStore<f64>, name: &str, i: usize, v: f64) {
    store.get_mut(name).unwrap().value.data_mut()[i] = v;
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("forward value {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::nn::linear;
    use crate::tensor_core::params::uniform;
    use rand::SeedableRng;

    fn setup() -> (ParameterStore<f64>, Tensor<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut store = ParameterStore::new();
        store.init_linear(&mut rng, "lin", 3, 2).unwrap();
        (store, uniform(&mut rng, &[4, 3], 1.0))
    }

    /// `offset + ½‖x·W + b‖²`
    struct HalfSquares(Tensor<f64>, f64);

    impl Objective for HalfSquares {
        fn record<T: Scalar>(&mut self, g: &mut Graph<T>, p: &ParameterStore<T>) -> Result<Var> {
            let xv = g.constant(self.0.cast())?;
            let y = linear(g, p, "lin", xv)?;
            let s = g.sum_squares(y)?;
            let half = g.scale(s, T::of(0.5))?;
            let offset = g.constant(Tensor::scalar(T::of(self.1)))?;
            g.add(half, offset)
        }
    }

    #[test]
    fn linear_loss_passes_tightly() {
        let (store, x) = setup();
        let report = grad_check(&mut HalfSquares(x, 0.0), &store, 1e-8).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.per_param.len(), 2);
        assert_eq!(report.entries, 8);
    }

    #[test]
    fn tiny_gradients_are_resolved_in_double_double() {
        // gradients near 1e-8 under a loss of order one: f64 differences
        // carry about 1e-11 of rounding noise, too much for tol 1e-6
        let (mut store, x) = setup();
        for (_, e) in store.iter_mut() {
            e.value = e.value.scale(1e-8);
        }
        let report = grad_check(&mut HalfSquares(x, 1.0), &store, 1e-6).unwrap();
        assert!(report.f64_worst > 1e-6, "{report:?}");
        assert!(report.refined > 0);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let (store, x) = setup();
        let mut analytic = store.clone();
        let mut g = Graph::new();
        let xv = g.constant(x.clone()).unwrap();
        let y = linear(&mut g, &analytic, "lin", xv).unwrap();
        let l = g.sum_squares(y).unwrap();
        g.backward(l, &mut analytic).unwrap();
        // a wrong rule: drop the factor 2 of d(x²)/dx
        for (_, e) in analytic.iter_mut() {
            e.grad = e.grad.scale(0.5);
        }
        let numeric = finite_difference_grads(
            |p| {
                let mut g = Graph::new();
                let xv = g.constant(x.clone())?;
                let y = linear(&mut g, p, "lin", xv)?;
                let l = g.sum_squares(y)?;
                Ok(g.value(l).item())
            },
            &store,
            FD_STEP,
        )
        .unwrap();
        let report = compare_gradients(&analytic, &numeric, 1e-4);
        assert!(!report.passed());
        assert!(report.worst() > 0.4);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}

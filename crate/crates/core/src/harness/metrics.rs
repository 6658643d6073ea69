//! Error metrics and report tables.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::geometry::Domain;
use crate::tensor_core::tensor::{Scalar, Tensor};

/// Norms below this are treated as zero.
const ZERO_NORM: f64 = 1e-12;

fn check_shapes<T: Scalar>(u: &Tensor<T>, u_hat: &Tensor<T>) -> Result<()> {
    if u.shape() != u_hat.shape() {
        return Err(shape_err!("reference {:?} vs estimate {:?}", u.shape(), u_hat.shape()));
    }
    Ok(())
}

fn sq_diff<T: Scalar>(u: &Tensor<T>, u_hat: &Tensor<T>) -> f64 {
    u.data()
        .iter()
        .zip(u_hat.data())
        .map(|(&a, &b)| {
            let e = a.as_f64() - b.as_f64();
            e * e
        })
        .sum()
}

/// `‖u − û‖ / ‖u‖` with the flag `true` when `‖u‖` vanishes and the absolute norm is returned.
pub fn relative_l2_flagged<T: Scalar>(u: &Tensor<T>, u_hat: &Tensor<T>) -> Result<(f64, bool)> {
    check_shapes(u, u_hat)?;
    let num = sq_diff(u, u_hat).sqrt();
    let den = u.data().iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
    if den > ZERO_NORM {
        Ok((num / den, false))
    } else {
        Ok((num, true))
    }
}

/// Frobenius-norm ratio `‖u − û‖ / ‖u‖`.
pub fn relative_l2<T: Scalar>(u: &Tensor<T>, u_hat: &Tensor<T>) -> Result<f64> {
    relative_l2_flagged(u, u_hat).map(|(v, _)| v)
}

/// `√(1/N Σ_i ‖u_i − û_i‖²)` over the `N` rows of `u`.
pub fn rmse_metric<T: Scalar>(u: &Tensor<T>, u_hat: &Tensor<T>) -> Result<f64> {
    check_shapes(u, u_hat)?;
    let n = if u.rank() == 0 { 1 } else { u.shape()[0] };
    if n == 0 {
        return Ok(0.0);
    }
    Ok((sq_diff(u, u_hat) / n as f64).sqrt())
}

/// Errors of one quantity of one domain, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub domain: Domain,
    pub quantity: String,
    pub unit: String,
    pub relative_l2: f64,
    pub rmse: f64,
    /// The reference vanished and `relative_l2` holds the absolute error.
    #[serde(default)]
    pub absolute: bool,
}

/// Sum-of-squares accumulator for one quantity, so metrics can be pooled over samples.
#[derive(Debug, Clone, Default)]
pub struct ErrorAccumulator {
    err_sq: f64,
    ref_sq: f64,
    rows: usize,
}

impl ErrorAccumulator {
    /// Add the columns `cols` of `reference` and `estimate`.
    pub fn add<T: Scalar>(&mut self, reference: &Tensor<T>, estimate: &Tensor<T>, cols: std::ops::Range<usize>) -> Result<()> {
        check_shapes(reference, estimate)?;
        let c = reference.cols();
        for i in 0..reference.rows() {
            for j in cols.clone() {
                let (a, b) = (reference.data()[i * c + j].as_f64(), estimate.data()[i * c + j].as_f64());
                self.err_sq += (a - b) * (a - b);
                self.ref_sq += a * a;
            }
        }
        self.rows += reference.rows();
        Ok(())
    }

    pub fn relative_l2(&self) -> (f64, bool) {
        let den = self.ref_sq.sqrt();
        if den > ZERO_NORM {
            (self.err_sq.sqrt() / den, false)
        } else {
            (self.err_sq.sqrt(), true)
        }
    }

    pub fn rmse(&self) -> f64 {
        if self.rows == 0 {
            0.0
        } else {
            (self.err_sq / self.rows as f64).sqrt()
        }
    }

    pub fn row(&self, domain: Domain, quantity: &str, unit: &str) -> MetricRow {
        let (relative_l2, absolute) = self.relative_l2();
        MetricRow {
            domain,
            quantity: quantity.into(),
            unit: unit.into(),
            relative_l2,
            rmse: self.rmse(),
            absolute,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor<f64> {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn relative_l2_examples() {
        assert_eq!(relative_l2(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap(), 0.0);
        assert_eq!(relative_l2(&v(&[3.0, 4.0]), &v(&[0.0, 0.0])).unwrap(), 1.0);
        assert!((relative_l2(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(relative_l2_flagged(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), (5.0, true));
        assert!(relative_l2(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn rmse_examples() {
        let u = Tensor::matrix(2, 1, vec![0.0, 0.0]).unwrap();
        let h = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        assert!((rmse_metric(&u, &h).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse_metric(&u, &u).unwrap(), 0.0);
        let h2 = Tensor::matrix(2, 1, vec![4.0, 3.0]).unwrap();
        assert_eq!(rmse_metric(&u, &h).unwrap(), rmse_metric(&u, &h2).unwrap());
    }

    #[test]
    fn accumulator_matches_direct_metrics() {
        let a = Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        let b = Tensor::matrix(3, 2, vec![1.5, 2.0, -0.5, 0.0, 0.1, 2.0]).unwrap();
        let mut acc = ErrorAccumulator::default();
        acc.add(&a, &b, 0..2).unwrap();
        assert!((acc.relative_l2().0 - relative_l2(&a, &b).unwrap()).abs() < 1e-15);
        assert!((acc.rmse() - rmse_metric(&a, &b).unwrap()).abs() < 1e-15);
    }
}

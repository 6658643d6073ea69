//! Linear maps and two-layer feed-forward blocks, both as plain tensor
//! functions and as recorded graph operations over named parameters.

use super::graph::{Graph, Var};
use super::params::ParameterStore;
use super::tensor::{Scalar, Tensor};
use crate::error::{shape_err, Result};

pub(crate) const GELU_A: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub(crate) const GELU_B: f64 = 0.044_715;

/// `x·W + b`.
pub fn linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if w.rank() != 2 || b.numel() != w.cols() {
        return Err(shape_err!(
            "linear weight {:?} with bias {:?}",
            w.shape(),
            b.shape()
        ));
    }
    let mut out = x.matmul(w)?;
    let c = out.cols();
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        *o += b.data()[i % c];
    }
    Ok(out)
}

pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (a, b, half) = (T::of(GELU_A), T::of(GELU_B), T::of(0.5));
    x.map(|v| half * v * (T::one() + (a * (v + b * v * v * v)).tanh()))
}

/// `gelu(x·W1 + b1)·W2 + b2`.
pub fn ffn_forward<T: Scalar>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
) -> Result<Tensor<T>> {
    let h = gelu(&linear_forward(x, w1, b1)?);
    linear_forward(&h, w2, b2)
}

/// Recorded `x·{name}.weight + {name}.bias`.
pub fn linear<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let w = g.param(store, &format!("{name}.weight"))?;
    let b = g.param(store, &format!("{name}.bias"))?;
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// Recorded bias-free map `x·{name}.weight`.
pub fn project<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let w = g.param(store, &format!("{name}.weight"))?;
    g.matmul(x, w)
}

/// Recorded two-layer block over `{name}.fc1` and `{name}.fc2`.
pub fn ffn<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
) -> Result<Var> {
    let h = linear(g, store, &format!("{name}.fc1"), x)?;
    let h = g.gelu(h)?;
    linear(g, store, &format!("{name}.fc2"), h)
}

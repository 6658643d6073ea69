//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Every primitive appends a node holding its forward value and the ids of
//! its inputs. [`Graph::backward`] replays the tape in reverse and adds the
//! resulting parameter gradients into a [`ParameterStore`].

use std::collections::HashMap;
use std::sync::Arc;

use super::nn::{GELU_A, GELU_B};
use super::params::ParameterStore;
use super::tensor::{gemm_nn, gemm_nt, gemm_tn, softmax, Axis, Scalar, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Constant,
    Param,
    MatMul(Var, Var),
    /// a · bᵀ
    MatMulNT(Var, Var),
    /// aᵀ · b
    MatMulTN(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    /// x times a one-element tensor
    ScaleBy(Var, Var),
    Softmax(Var, Axis),
    Gelu(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    NeighborMix {
        weights: Var,
        values: Var,
        edges: Arc<[usize]>,
    },
    Sum(Var),
    SumSquares(Var),
    Sqrt(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recorded computation. One graph per forward pass and per parameter store.
#[derive(Debug, Clone, Default)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}




impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(format!(
                "output of {} (node {})",
                op_name(&op),
                self.nodes.len()
            )));
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to a named parameter. Repeated lookups of the same name share one leaf.
    pub fn param(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let entry = store
            .get(name)
            .ok_or_else(|| Error::Graph(format!("unknown parameter `{name}`")))?;
        let v = self.push(
            entry.value.clone(),
            Op::Param,
            entry.trainable,
        )?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.matmul(bv)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols() {
            return Err(shape_err!("matmul_nt {:?} x {:?}ᵀ", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![T::zero(); m * n];
        gemm_nt(av.data(), bv.data(), &mut out, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b), ng)
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows() {
            return Err(shape_err!("matmul_tn {:?}ᵀ x {:?}", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![T::zero(); k * n];
        gemm_tn(av.data(), bv.data(), &mut out, m, k, n);
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::matrix(k, n, out)?, Op::MatMulTN(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Sub(a, b), ng)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Mul(a, b), ng)
    }

    /// `x[N×D] + b[D]`, bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if xv.rank() != 2 || bv.numel() != xv.cols() {
            return Err(shape_err!(
                "bias {:?} does not match {:?}",
                bv.shape(),
                xv.shape()
            ));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % c];
        }
        let ng = self.needs(x) || self.needs(b);
        self.push(out, Op::AddRow(x, b), ng)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).scale(s);
        let ng = self.needs(x);
        self.push(out, Op::Scale(x, s), ng)
    }

    /// `x · s` with `s` a one-element tensor (typically a scalar parameter).
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.numel() != 1 {
            return Err(shape_err!("scale_by expects one element, got {:?}", sv.shape()));
        }
        let out = self.value(x).scale(sv.item());
        let ng = self.needs(x) || self.needs(s);
        self.push(out, Op::ScaleBy(x, s), ng)
    }

    pub fn softmax(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let out = softmax(self.value(x), axis)?;
        let ng = self.needs(x);
        self.push(out, Op::Softmax(x, axis), ng)
    }

    /// Tanh-form Gaussian error linear unit.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let (a, b) = (T::of(GELU_A), T::of(GELU_B));
        let half = T::of(0.5);
        let out = self
            .value(x)
            .map(|v| half * v * (T::one() + (a * (v + b * v * v * v)).tanh()));
        let ng = self.needs(x);
        self.push(out, Op::Gelu(x), ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&vals)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&vals)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_rows(start, len)?;
        let ng = self.needs(x);
        self.push(out, Op::SliceRows(x, start), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_cols(start, len)?;
        let ng = self.needs(x);
        self.push(out, Op::SliceCols(x, start), ng)
    }

    /// Split into `parts` equal row blocks.
    pub fn chunk_rows(&mut self, x: Var, parts: usize) -> Result<Vec<Var>> {
        let rows = self.value(x).rows();
        if parts == 0 || !rows.is_multiple_of(parts) {
            return Err(shape_err!("cannot chunk {rows} rows into {parts} blocks"));
        }
        let len = rows / parts;
        (0..parts)
            .map(|p| self.slice_rows(x, p * len, len))
            .collect()
    }

    /// `out_i = Σ_s weights[i,s] · values[edges[i·k + s]]` with `k = weights.cols()`.
    pub fn neighbor_mix(&mut self, weights: Var, values: Var, edges: Arc<[usize]>) -> Result<Var> {
        let (wv, vv) = (self.value(weights), self.value(values));
        let (m, k) = (wv.rows(), wv.cols());
        if edges.len() != m * k || vv.rows() != m {
            return Err(shape_err!(
                "neighbor_mix: {} edges for weights {:?}, values {:?}",
                edges.len(),
                wv.shape(),
                vv.shape()
            ));
        }
        if let Some(&bad) = edges.iter().find(|&&e| e >= m) {
            return Err(shape_err!("neighbor index {bad} out of range {m}"));
        }
        let d = vv.cols();
        let mut out = vec![T::zero(); m * d];
        for i in 0..m {
            let orow = &mut out[i * d..(i + 1) * d];
            for s in 0..k {
                let w = wv.data()[i * k + s];
                let src = vv.row(edges[i * k + s]);
                for (o, &x) in orow.iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        let ng = self.needs(weights) || self.needs(values);
        self.push(
            Tensor::matrix(m, d, out)?,
            Op::NeighborMix {
                weights,
                values,
                edges,
            },
            ng,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.needs(x);
        self.push(out, Op::Sum(x), ng)
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).data().iter().map(|&v| v * v).sum());
        let ng = self.needs(x);
        self.push(out, Op::SumSquares(x), ng)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.data().iter().any(|&v| v < T::zero()) {
            return Err(Error::NonFinite("sqrt of negative value".into()));
        }
        let out = xv.map(|v| v.sqrt());
        let ng = self.needs(x);
        self.push(out, Op::Sqrt(x), ng)
    }

    /// Gradients of `loss` with respect to every node, scaled by `seed`.
    pub fn gradients(&self, loss: Var, seed: T) -> Result<Vec<Option<Tensor<T>>>> {
        if self.nodes.is_empty() {
            return Err(Error::Graph("backward on an empty graph".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Graph(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), seed));
        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.propagate(idx, &dy, &mut grads)?;
            grads[idx] = Some(dy);
        }
        Ok(grads)
    }

    /// Accumulate `seed · ∂loss/∂param` into `store` for every trainable parameter on the tape.
    pub fn backward_scaled(&self, loss: Var, seed: T, store: &mut ParameterStore<T>) -> Result<()> {
        let grads = self.gradients(loss, seed)?;
        for (name, &v) in &self.params {
            if let Some(g) = grads.get(v.0).and_then(Option::as_ref) {
                store.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }

    pub fn backward(&self, loss: Var, store: &mut ParameterStore<T>) -> Result<()> {
        self.backward_scaled(loss, T::one(), store)
    }

    fn propagate(&self, idx: usize, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.needs(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm_nt(dy.data(), bv.data(), &mut da, m, n, k);
                    self.acc(grads, *a, Tensor::matrix(m, k, da)?)?;
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm_tn(av.data(), dy.data(), &mut db, m, k, n);
                    self.acc(grads, *b, Tensor::matrix(k, n, db)?)?;
                }
            }
            Op::MatMulNT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if self.needs(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm_nn(dy.data(), bv.data(), &mut da, m, n, k);
                    self.acc(grads, *a, Tensor::matrix(m, k, da)?)?;
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); n * k];
                    gemm_tn(dy.data(), av.data(), &mut db, m, n, k);
                    self.acc(grads, *b, Tensor::matrix(n, k, db)?)?;
                }
            }
            Op::MatMulTN(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.needs(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm_nt(bv.data(), dy.data(), &mut da, m, n, k);
                    self.acc(grads, *a, Tensor::matrix(m, k, da)?)?;
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); m * n];
                    gemm_nn(av.data(), dy.data(), &mut db, m, k, n);
                    self.acc(grads, *b, Tensor::matrix(m, n, db)?)?;
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, dy.clone())?;
                self.acc(grads, *b, dy.clone())?;
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, dy.clone())?;
                self.acc(grads, *b, dy.scale(-T::one()))?;
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    self.acc(grads, *a, dy.zip_map(bv, |g, x| g * x)?)?;
                }
                if self.needs(*b) {
                    self.acc(grads, *b, dy.zip_map(av, |g, x| g * x)?)?;
                }
            }
            Op::AddRow(x, b) => {
                self.acc(grads, *x, dy.clone())?;
                if self.needs(*b) {
                    let bshape = self.value(*b).shape().to_vec();
                    let c = dy.cols();
                    let mut db = vec![T::zero(); c];
                    for row in dy.data().chunks(c) {
                        for (o, &g) in db.iter_mut().zip(row) {
                            *o += g;
                        }
                    }
                    self.acc(grads, *b, Tensor::new(bshape, db)?)?;
                }
            }
            Op::Scale(x, s) => self.acc(grads, *x, dy.scale(*s))?,
            Op::ScaleBy(x, s) => {
                let sv = self.value(*s);
                if self.needs(*x) {
                    self.acc(grads, *x, dy.scale(sv.item()))?;
                }
                if self.needs(*s) {
                    let ds: T = dy
                        .data()
                        .iter()
                        .zip(self.value(*x).data())
                        .map(|(&g, &v)| g * v)
                        .sum();
                    self.acc(grads, *s, Tensor::new(sv.shape().to_vec(), vec![ds])?)?;
                }
            }
            Op::Softmax(x, axis) => {
                let (r, c) = (y.rows(), y.cols());
                let mut dx = vec![T::zero(); r * c];
                match axis {
                    Axis::Cols => {
                        for i in 0..r {
                            let yr = y.row(i);
                            let gr = dy.row(i);
                            let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                            for j in 0..c {
                                dx[i * c + j] = yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    Axis::Rows => {
                        for j in 0..c {
                            let mut dot = T::zero();
                            for i in 0..r {
                                dot += y.at(i, j) * dy.at(i, j);
                            }
                            for i in 0..r {
                                dx[i * c + j] = y.at(i, j) * (dy.at(i, j) - dot);
                            }
                        }
                    }
                }
                self.acc(grads, *x, Tensor::matrix(r, c, dx)?)?;
            }
            Op::Gelu(x) => {
                let (a, b) = (T::of(GELU_A), T::of(GELU_B));
                let half = T::of(0.5);
                let three = T::of(3.0);
                let dx = self.value(*x).zip_map(dy, |v, g| {
                    let t = (a * (v + b * v * v * v)).tanh();
                    let d = half * (T::one() + t)
                        + half * v * (T::one() - t * t) * a * (T::one() + three * b * v * v);
                    g * d
                })?;
                self.acc(grads, *x, dx)?;
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).rows();
                    if self.needs(p) {
                        self.acc(grads, p, dy.slice_rows(start, len)?)?;
                    }
                    start += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.value(p).cols();
                    if self.needs(p) {
                        self.acc(grads, p, dy.slice_cols(start, len)?)?;
                    }
                    start += len;
                }
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = Tensor::zeros(xv.shape());
                dx.data_mut()[start * c..start * c + dy.numel()].copy_from_slice(dy.data());
                self.acc(grads, *x, dx)?;
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.shape());
                let len = dy.cols();
                for i in 0..xv.rows() {
                    for j in 0..len {
                        dx.set(i, start + j, dy.at(i, j));
                    }
                }
                self.acc(grads, *x, dx)?;
            }
            Op::NeighborMix {
                weights,
                values,
                edges,
            } => {
                let (wv, vv) = (self.value(*weights), self.value(*values));
                let (m, k, d) = (wv.rows(), wv.cols(), vv.cols());
                let mut dw = vec![T::zero(); m * k];
                let mut dv = vec![T::zero(); m * d];
                for i in 0..m {
                    let g = dy.row(i);
                    for s in 0..k {
                        let e = edges[i * k + s];
                        let src = vv.row(e);
                        dw[i * k + s] = g.iter().zip(src).map(|(&a, &b)| a * b).sum();
                        let w = wv.data()[i * k + s];
                        for (o, &gv) in dv[e * d..(e + 1) * d].iter_mut().zip(g) {
                            *o += w * gv;
                        }
                    }
                }
                if self.needs(*weights) {
                    self.acc(grads, *weights, Tensor::matrix(m, k, dw)?)?;
                }
                if self.needs(*values) {
                    self.acc(grads, *values, Tensor::matrix(m, d, dv)?)?;
                }
            }
            Op::Sum(x) => {
                let g = dy.item();
                self.acc(grads, *x, Tensor::full(self.value(*x).shape(), g))?;
            }
            Op::SumSquares(x) => {
                let two_g = T::of(2.0) * dy.item();
                self.acc(grads, *x, self.value(*x).scale(two_g))?;
            }
            Op::Sqrt(x) => {
                let half = T::of(0.5);
                let dx = y.zip_map(dy, |r, g| {
                    if r > T::zero() {
                        half * g / r
                    } else {
                        T::zero()
                    }
                })?;
                self.acc(grads, *x, dx)?;
            }
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += *x;
                }
            }
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::Param => "param",
        Op::MatMul(..) => "matmul",
        Op::MatMulNT(..) => "matmul_nt",
        Op::MatMulTN(..) => "matmul_tn",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::ScaleBy(..) => "scale_by",
        Op::Softmax(..) => "softmax",
        Op::Gelu(..) => "gelu",
        Op::ConcatRows(..) => "concat_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceRows(..) => "slice_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::NeighborMix { .. } => "neighbor_mix",
        Op::Sum(..) => "sum",
        Op::SumSquares(..) => "sum_squares",
        Op::Sqrt(..) => "sqrt",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor<f64>) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert(name, t, true).unwrap();
        s
    }

    #[test]
    fn sum_gives_ones() {
        let mut store = store_with("x", Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap());
        let mut g = Graph::new();
        let x = g.param(&store, "x").unwrap();
        let l = g.sum(x).unwrap();
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("x").unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_square_norm_gives_x() {
        let x0 = Tensor::matrix(1, 3, vec![0.5, -1.5, 2.0]).unwrap();
        let mut store = store_with("x", x0.clone());
        let mut g = Graph::new();
        let x = g.param(&store, "x").unwrap();
        let s = g.sum_squares(x).unwrap();
        let l = g.scale(s, 0.5).unwrap();
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("x").unwrap(), &x0);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = store_with("x", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let mut g = Graph::new();
        let x = g.param(&store, "x").unwrap();
        let l = g.sum(x).unwrap();
        g.backward(l, &mut store).unwrap();
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("x").unwrap().data(), &[2.0, 2.0]);
        store.zero_grad();
        assert_eq!(store.grad("x").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn rejects_non_scalar_loss_and_empty_graph() {
        let mut store = store_with("x", Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let empty: Graph<f64> = Graph::new();
        assert!(matches!(
            empty.gradients(Var(0), 1.0),
            Err(Error::Graph(_))
        ));
        let mut g = Graph::new();
        let x = g.param(&store, "x").unwrap();
        assert!(matches!(g.backward(x, &mut store), Err(Error::Graph(_))));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g: Graph<f64> = Graph::new();
        let x = g
            .constant(Tensor::matrix(1, 1, vec![f64::MAX]).unwrap())
            .unwrap();
        assert!(matches!(g.add(x, x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shared_param_leaf_collects_both_paths() {
        // loss = sum(x * x) through mul uses the leaf twice
        let mut store = store_with("x", Tensor::matrix(1, 2, vec![3.0, -1.0]).unwrap());
        let mut g = Graph::new();
        let a = g.param(&store, "x").unwrap();
        let b = g.param(&store, "x").unwrap();
        assert_eq!(a, b);
        let p = g.mul(a, b).unwrap();
        let l = g.sum(p).unwrap();
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad("x").unwrap().data(), &[6.0, -2.0]);
    }
}

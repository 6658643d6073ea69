//! Attention-style interpolation between physical points and latent grid
//! nodes, and feature fusion across pathways.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor_core::graph::{Graph, Var};
use crate::tensor_core::nn::{ffn, linear};
use crate::tensor_core::params::ParameterStore;
use crate::tensor_core::tensor::{Axis, Scalar};

/// Register the query (grid side) and key (point side) maps of one encoder.
pub fn init_encoder_params<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    rng: &mut R,
    name: &str,
    width: usize,
) -> Result<()> {
    store.init_linear(rng, &format!("{name}.q"), width, width)?;
    store.init_linear(rng, &format!("{name}.k"), width, width)
}

/// Project point features `x[N×D]` onto grid nodes with coordinates `g_a[M×D]`.
/// Returns the raw weights `w = Q·Kᵀ [M×N]` and `p = softmax_N(w)·x [M×D]`.
pub fn encode_domain<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    x: Var,
    g_a: Var,
) -> Result<(Var, Var)> {
    let (xw, gw) = (g.value(x).cols(), g.value(g_a).cols());
    if xw != gw {
        return Err(shape_err!("point width {xw} differs from grid width {gw}"));
    }
    let q = linear(g, store, &format!("{name}.q"), g_a)?;
    let k = linear(g, store, &format!("{name}.k"), x)?;
    let w = g.matmul_nt(q, k)?;
    let weights = g.softmax(w, Axis::Cols)?;
    let p = g.matmul(weights, x)?;
    Ok((w, p))
}

/// Interpolate grid features `p_hat[M×D]` back to the `N` points using the
/// encoder weights, normalized over grid nodes: `softmax_M(w)ᵀ·p_hat`.
pub fn decode_domain<T: Scalar>(g: &mut Graph<T>, p_hat: Var, w: Var) -> Result<Var> {
    let (m, wm) = (g.value(p_hat).rows(), g.value(w).rows());
    if m != wm {
        return Err(shape_err!("{m} grid features but weights cover {wm} nodes"));
    }
    let weights = g.softmax(w, Axis::Rows)?;
    g.matmul_tn(weights, p_hat)
}

/// Register the fusion block over pathway widths `widths`.
pub fn init_aggregate_params<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    rng: &mut R,
    name: &str,
    widths: &[usize],
    ffn_mult: usize,
) -> Result<()> {
    let total: usize = widths.iter().sum();
    store.init_ffn(rng, name, total, ffn_mult * total, total)
}

/// Concatenate pathway features, fuse with a feed-forward block, and split back.
pub fn aggregate_pathways<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    features: &[Var],
) -> Result<Vec<Var>> {
    let n = g.value(features[0]).rows();
    if features.iter().any(|&f| g.value(f).rows() != n) {
        return Err(shape_err!("pathways disagree on point count"));
    }
    let widths: Vec<usize> = features.iter().map(|&f| g.value(f).cols()).collect();
    let joined = if features.len() == 1 {
        features[0]
    } else {
        g.concat_cols(features)?
    };
    let fused = ffn(g, store, name, joined)?;
    if features.len() == 1 {
        return Ok(vec![fused]);
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut start = 0;
    for w in widths {
        out.push(g.slice_cols(fused, start, w)?);
        start += w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::params::uniform;
    use crate::tensor_core::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, m: usize, d: usize, seed: u64) -> (ParameterStore<f64>, Tensor<f64>, Tensor<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        init_encoder_params(&mut store, &mut rng, "enc", d).unwrap();
        (store, uniform(&mut rng, &[n, d], 2.0), uniform(&mut rng, &[m, d], 2.0))
    }

    #[test]
    fn single_point_broadcasts() {
        let (store, x, ga) = setup(1, 3, 2, 1);
        let mut g = Graph::new();
        let (xv, gv) = (g.constant(x.clone()).unwrap(), g.constant(ga).unwrap());
        let (_, p) = encode_domain(&mut g, &store, "enc", xv, gv).unwrap();
        for i in 0..3 {
            assert_eq!(g.value(p).row(i), x.row(0));
        }
    }

    #[test]
    fn constant_features_survive_round_trip() {
        let (store, _, ga) = setup(5, 4, 3, 2);
        let x = Tensor::from_rows(&vec![vec![0.5, -1.0, 2.0]; 5]).unwrap();
        let mut g = Graph::new();
        let (xv, gv) = (g.constant(x).unwrap(), g.constant(ga).unwrap());
        let (w, p) = encode_domain(&mut g, &store, "enc", xv, gv).unwrap();
        let back = decode_domain(&mut g, p, w).unwrap();
        for v in [p, back] {
            for row in g.value(v).data().chunks(3) {
                for (a, b) in row.iter().zip([0.5, -1.0, 2.0]) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_grid_node_decodes_to_its_feature() {
        let mut g: Graph<f64> = Graph::new();
        let p = g.constant(Tensor::matrix(1, 2, vec![3.0, -4.0]).unwrap()).unwrap();
        let w = g.constant(Tensor::matrix(1, 3, vec![0.1, 9.0, -2.0]).unwrap()).unwrap();
        let x = decode_domain(&mut g, p, w).unwrap();
        assert_eq!(g.value(x).data(), &[3.0, -4.0, 3.0, -4.0, 3.0, -4.0]);
    }

    #[test]
    fn aggregate_single_pathway_and_zero_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store: ParameterStore<f64> = ParameterStore::new();
        init_aggregate_params(&mut store, &mut rng, "agg", &[3, 2], 2).unwrap();
        for (_, e) in store.iter_mut() {
            e.value = Tensor::zeros(e.value.shape());
        }
        let mut g = Graph::new();
        let a = g.constant(uniform(&mut rng, &[4, 3], 1.0)).unwrap();
        let b = g.constant(uniform(&mut rng, &[4, 2], 1.0)).unwrap();
        let out = aggregate_pathways(&mut g, &store, "agg", &[a, b]).unwrap();
        assert_eq!(g.value(out[0]).shape(), &[4, 3]);
        assert_eq!(g.value(out[1]).shape(), &[4, 2]);
        assert!(out.iter().all(|&o| g.value(o).data().iter().all(|&v| v == 0.0)));

        let mut single: ParameterStore<f64> = ParameterStore::new();
        init_aggregate_params(&mut single, &mut rng, "agg", &[3], 2).unwrap();
        let mut g = Graph::new();
        let a = g.constant(uniform(&mut rng, &[4, 3], 1.0)).unwrap();
        let out = aggregate_pathways(&mut g, &single, "agg", &[a]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(g.value(out[0]).shape(), &[4, 3]);
    }

    #[test]
    fn mismatched_point_counts_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store: ParameterStore<f64> = ParameterStore::new();
        init_aggregate_params(&mut store, &mut rng, "agg", &[2, 2], 1).unwrap();
        let mut g = Graph::new();
        let a = g.constant(uniform(&mut rng, &[4, 2], 1.0)).unwrap();
        let b = g.constant(uniform(&mut rng, &[3, 2], 1.0)).unwrap();
        assert!(aggregate_pathways(&mut g, &store, "agg", &[a, b]).is_err());
    }
}

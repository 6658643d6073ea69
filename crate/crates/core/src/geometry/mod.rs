//! Observations, normalization, and latent ALE grid construction.

mod knn;
mod state;

pub use knn::{knn_edges, KnnGraph};
pub use state::{
    normalize_with_stats, ChannelStats, Domain, DomainObservation, DomainStats, NormStats,
    SystemState,
};

use crate::error::{invalid, shape_err, Result};
use crate::tensor_core::graph::{Graph, Var};
use crate::tensor_core::nn::linear;
use crate::tensor_core::params::ParameterStore;
use crate::tensor_core::tensor::{softmax, Axis, Scalar, Tensor};

/// Half-width of the seeding cube.
pub const GRID_EXTENT: f64 = 3.5;

/// Axis-aligned lattice on `[-3.5, 3.5]^d`, flattened row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct RegularGrid<T> {
    pub points: Tensor<T>,
    pub axis_counts: Vec<usize>,
}

impl<T: Scalar> RegularGrid<T> {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.axis_counts.len()
    }
}

pub fn seed_regular_grid<T: Scalar>(axis_counts: &[usize]) -> Result<RegularGrid<T>> {
    if axis_counts.is_empty() || axis_counts.len() > 3 {
        return Err(invalid!("grid must have 1 to 3 axes, got {}", axis_counts.len()));
    }
    if let Some(&m) = axis_counts.iter().find(|&&m| m < 2) {
        return Err(invalid!("each grid axis needs at least 2 samples, got {m}"));
    }
    let d = axis_counts.len();
    let total: usize = axis_counts.iter().product();
    let axes: Vec<Vec<f64>> = axis_counts
        .iter()
        .map(|&m| {
            (0..m)
                .map(|i| {
                    if i == m - 1 {
                        GRID_EXTENT
                    } else {
                        -GRID_EXTENT + 2.0 * GRID_EXTENT * i as f64 / (m - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(total * d);
    for flat in 0..total {
        let mut rem = flat;
        let mut coord = vec![0.0; d];
        for ax in (0..d).rev() {
            coord[ax] = axes[ax][rem % axis_counts[ax]];
            rem /= axis_counts[ax];
        }
        data.extend(coord.into_iter().map(T::of));
    }
    Ok(RegularGrid {
        points: Tensor::matrix(total, d, data)?,
        axis_counts: axis_counts.to_vec(),
    })
}

/// `−‖a_i − g_j‖²` for every grid node `i` and point `j`.
fn neg_sq_dist<T: Scalar>(grid: &Tensor<T>, positions: &Tensor<T>) -> Result<Tensor<T>> {
    if grid.cols() != positions.cols() {
        return Err(shape_err!(
            "grid is {}-dimensional, positions {}-dimensional",
            grid.cols(),
            positions.cols()
        ));
    }
    if positions.rows() == 0 {
        return Err(invalid!("domain offset needs at least one point"));
    }
    let (m, n) = (grid.rows(), positions.rows());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let a = grid.row(i);
        for j in 0..n {
            let d2: T = a
                .iter()
                .zip(positions.row(j))
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum();
            out[i * n + j] = -d2;
        }
    }
    Tensor::matrix(m, n, out)
}

/// Geometry-aware displacement of each grid node toward one domain's points:
/// `Δ(a_i) = Σ_j softmax_j(gain·(−‖a_i − g_j‖²)) (g_j − a_i)`.
pub fn domain_offset<T: Scalar>(
    grid: &RegularGrid<T>,
    positions: &Tensor<T>,
    gain: T,
) -> Result<Tensor<T>> {
    let logits = neg_sq_dist(&grid.points, positions)?.scale(gain);
    let w = softmax(&logits, Axis::Cols)?;
    w.matmul(positions)?.sub(&grid.points)
}

/// Recorded variant of [`domain_offset`] with a learnable gain.
pub fn record_domain_offset<T: Scalar>(
    g: &mut Graph<T>,
    grid: &RegularGrid<T>,
    positions: &Tensor<T>,
    gain: Var,
) -> Result<Var> {
    let nd = g.constant(neg_sq_dist(&grid.points, positions)?)?;
    let logits = g.scale_by(nd, gain)?;
    let w = g.softmax(logits, Axis::Cols)?;
    let pos = g.constant(positions.clone())?;
    let pulled = g.matmul(w, pos)?;
    let a = g.constant(grid.points.clone())?;
    g.sub(pulled, a)
}

/// Register the offset gain and latent projection of one pathway.
pub fn init_grid_params<T: Scalar, R: rand::Rng>(
    store: &mut ParameterStore<T>,
    rng: &mut R,
    prefix: &str,
    d: usize,
    width: usize,
) -> Result<()> {
    store.insert(&format!("{prefix}.offset_gain"), Tensor::vector(vec![T::one()])?, true)?;
    store.init_linear(rng, &format!("{prefix}.grid_proj"), d, width)
}

/// Records `g_a = Linear(a + Δ_s(a) + Δ_f(a) + Δ_b(a))` for one pathway.
pub fn record_latent_coords<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    prefix: &str,
    grid: &RegularGrid<T>,
    fluid: &Tensor<T>,
    solid: &Tensor<T>,
    interface: &Tensor<T>,
) -> Result<Var> {
    for (name, p) in [("fluid", fluid), ("solid", solid), ("interface", interface)] {
        if p.rows() == 0 {
            return Err(invalid!("{name} domain is empty"));
        }
    }
    let gain = g.param(store, &format!("{prefix}.offset_gain"))?;
    let ds = record_domain_offset(g, grid, solid, gain)?;
    let df = record_domain_offset(g, grid, fluid, gain)?;
    let db = record_domain_offset(g, grid, interface, gain)?;
    let a = g.constant(grid.points.clone())?;
    let mut shifted = g.add(a, ds)?;
    shifted = g.add(shifted, df)?;
    shifted = g.add(shifted, db)?;
    linear(g, store, &format!("{prefix}.grid_proj"), shifted)
}

/// Latent grid snapshot: coordinates, neighbor lists and neighborhood logits.
#[derive(Debug, Clone)]
pub struct LatentGrid<T> {
    pub coords: Tensor<T>,
    pub edges: KnnGraph,
    pub gamma_logits: Tensor<T>,
    pub beta_logits: Tensor<T>,
}

impl<T: Scalar> LatentGrid<T> {
    pub fn gamma_weights(&self) -> Result<Tensor<T>> {
        softmax(&self.gamma_logits, Axis::Cols)
    }

    pub fn beta_weights(&self) -> Result<Tensor<T>> {
        softmax(&self.beta_logits, Axis::Cols)
    }
}

/// Evaluate the latent grid of one pathway without recording gradients.
#[allow(clippy::too_many_arguments)]
pub fn init_latent_grid<T: Scalar>(
    store: &ParameterStore<T>,
    prefix: &str,
    grid: &RegularGrid<T>,
    fluid: &Tensor<T>,
    solid: &Tensor<T>,
    interface: &Tensor<T>,
    k: usize,
    logits_prefix: &str,
) -> Result<LatentGrid<T>> {
    let mut g = Graph::new();
    let coords = record_latent_coords(&mut g, store, prefix, grid, fluid, solid, interface)?;
    let coords = g.value(coords).clone();
    let edges = knn_edges(&coords, k)?;
    let fetch = |suffix: &str| {
        store
            .value(&format!("{logits_prefix}.{suffix}"))
            .cloned()
            .ok_or_else(|| invalid!("missing `{logits_prefix}.{suffix}`"))
    };
    Ok(LatentGrid {
        coords,
        edges,
        gamma_logits: fetch("gamma")?,
        beta_logits: fetch("beta")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_examples() {
        let g: RegularGrid<f64> = seed_regular_grid(&[2, 2]).unwrap();
        assert_eq!(
            g.points.data(),
            &[-3.5, -3.5, -3.5, 3.5, 3.5, -3.5, 3.5, 3.5]
        );
        let g: RegularGrid<f64> = seed_regular_grid(&[3]).unwrap();
        assert_eq!(g.points.data(), &[-3.5, 0.0, 3.5]);
        let g: RegularGrid<f64> = seed_regular_grid(&[5, 5, 5]).unwrap();
        assert_eq!(g.len(), 125);
        assert!((g.points.at(1, 2) - g.points.at(0, 2) - 1.75).abs() < 1e-12);
        assert!(g.points.data().iter().all(|v| v.abs() <= 3.5));
    }

    #[test]
    fn seed_rejects_small_axes() {
        assert!(seed_regular_grid::<f64>(&[1, 4]).is_err());
        assert!(seed_regular_grid::<f64>(&[]).is_err());
    }

    #[test]
    fn offset_of_identical_points_is_exact() {
        let grid: RegularGrid<f64> = seed_regular_grid(&[3, 2]).unwrap();
        let p = Tensor::from_rows(&vec![vec![0.3, -1.2]; 4]).unwrap();
        for gain in [0.1, 1.0, 7.0] {
            let off = domain_offset(&grid, &p, gain).unwrap();
            for i in 0..grid.len() {
                for c in 0..2 {
                    let expected = p.at(0, c) - grid.points.at(i, c);
                    assert!((off.at(i, c) - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn offset_coincident_single_point_is_zero() {
        let grid: RegularGrid<f64> = seed_regular_grid(&[2]).unwrap();
        let p = Tensor::matrix(1, 1, vec![-3.5]).unwrap();
        let off = domain_offset(&grid, &p, 1.0).unwrap();
        assert_eq!(off.at(0, 0), 0.0);
    }

    #[test]
    fn offset_symmetric_pair_cancels() {
        let grid = RegularGrid {
            points: Tensor::matrix(1, 1, vec![0.0]).unwrap(),
            axis_counts: vec![1],
        };
        let p = Tensor::matrix(2, 1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(domain_offset(&grid, &p, 1.0).unwrap().at(0, 0), 0.0);
    }
}

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::tensor_core::tensor::{Scalar, Tensor};

/// Exactly `k` neighbor indices per node, flattened node-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    pub neighbors: Arc<[usize]>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }
}

/// Brute-force k nearest neighbors under Euclidean distance, excluding self.
/// Ties go to the smaller index.
pub fn knn_edges<T: Scalar>(coords: &Tensor<T>, k: usize) -> Result<KnnGraph> {
    let m = coords.rows();
    if k == 0 || k >= m {
        return Err(invalid!("neighbor count {k} must lie in 1..{m}"));
    }
    let mut out = Vec::with_capacity(m * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(m - 1);
    for i in 0..m {
        cand.clear();
        let a = coords.row(i);
        for j in (0..m).filter(|&j| j != i) {
            let d2: f64 = a
                .iter()
                .zip(coords.row(j))
                .map(|(&x, &y)| {
                    let d = (x - y).as_f64();
                    d * d
                })
                .sum();
            cand.push((d2, j));
        }
        cand.select_nth_unstable_by(k - 1, |p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let head = &mut cand[..k];
        head.sort_unstable_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        out.extend(head.iter().map(|&(_, j)| j));
    }
    Ok(KnnGraph {
        k,
        neighbors: out.into(),
    })
}

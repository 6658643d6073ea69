//! Partitioned coupling on the latent grid: solid update, grid motion,
//! fluid update and interface alignment, plus a single-attention variant.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor_core::graph::{Graph, Var};
use crate::tensor_core::nn::{ffn, linear, project};
use crate::tensor_core::params::ParameterStore;
use crate::tensor_core::tensor::{Axis, Scalar, Tensor};

/// Grid-resident features threaded through one coupling module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingState {
    pub g_a: Var,
    pub p_s: Var,
    pub p_f: Var,
    pub p_b: Var,
}

impl CouplingState {
    pub fn check<T: Scalar>(&self, g: &Graph<T>) -> Result<()> {
        let shape = g.value(self.g_a).shape();
        for v in [self.p_s, self.p_f, self.p_b] {
            if g.value(v).shape() != shape {
                return Err(shape_err!(
                    "coupling block {:?} differs from grid {:?}",
                    g.value(v).shape(),
                    shape
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Solid,
    Grid,
    Fluid,
    Interface,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Solid => "solid",
            Step::Grid => "grid",
            Step::Fluid => "fluid",
            Step::Interface => "interface",
        }
    }
}

impl FromStr for Step {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "solid" => Ok(Step::Solid),
            "grid" => Ok(Step::Grid),
            "fluid" => Ok(Step::Fluid),
            "interface" => Ok(Step::Interface),
            other => Err(invalid!("unknown coupling step `{other}`")),
        }
    }
}

/// Execution order of the four substeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OrderingSpec([Step; 4]);

impl OrderingSpec {
    pub const DEFAULT: OrderingSpec =
        OrderingSpec([Step::Solid, Step::Grid, Step::Fluid, Step::Interface]);

    /// The six permutations compared in the ordering study, default last.
    pub const STUDIED: [&'static str; 6] = [
        "fluid-grid-solid-interface",
        "grid-solid-fluid-interface",
        "grid-solid-interface-fluid",
        "grid-interface-solid-fluid",
        "solid-fluid-interface-grid",
        "solid-grid-fluid-interface",
    ];

    pub fn new(steps: [Step; 4]) -> Result<Self> {
        for s in [Step::Solid, Step::Grid, Step::Fluid, Step::Interface] {
            if steps.iter().filter(|&&x| x == s).count() != 1 {
                return Err(invalid!("ordering must contain `{}` exactly once", s.name()));
            }
        }
        Ok(Self(steps))
    }

    pub fn steps(&self) -> &[Step; 4] {
        &self.0
    }

    pub fn studied() -> Vec<OrderingSpec> {
        Self::STUDIED.iter().map(|s| s.parse().unwrap()).collect()
    }
}

impl Default for OrderingSpec {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl FromStr for OrderingSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<Step> = s.split('-').map(str::parse).collect::<Result<_>>()?;
        let steps: [Step; 4] = parts
            .try_into()
            .map_err(|_| invalid!("ordering `{s}` must name four steps"))?;
        Self::new(steps)
    }
}

impl fmt::Display for OrderingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|s| s.name()).collect();
        f.write_str(&names.join("-"))
    }
}

/// `softmax_feat(Q)·(softmax_seq(K)ᵀ·V) / D`.
/// Returns the output together with the normalized `Q̃` and `K̃`.
pub fn linear_attention_traced<T: Scalar>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
) -> Result<(Var, Var, Var)> {
    let (qs, ks, vs) = (g.value(q).shape(), g.value(k).shape(), g.value(v).shape());
    if qs[1] != ks[1] || ks[0] != vs[0] {
        return Err(shape_err!(
            "attention shapes q {:?}, k {:?}, v {:?}",
            qs,
            ks,
            vs
        ));
    }
    let qt = g.softmax(q, Axis::Cols)?;
    let kt = g.softmax(k, Axis::Rows)?;
    let out = linear_attention_combine(g, qt, kt, v)?;
    Ok((out, qt, kt))
}

/// `Q̃·(K̃ᵀ·V) / D` from already normalized queries and keys.
pub fn linear_attention_combine<T: Scalar>(g: &mut Graph<T>, q_tilde: Var, k_tilde: Var, v: Var) -> Result<Var> {
    let d = g.value(q_tilde).shape()[1];
    let kv = g.matmul_tn(k_tilde, v)?;
    let out = g.matmul(q_tilde, kv)?;
    g.scale(out, T::one() / T::of(d as f64))
}

pub fn linear_attention<T: Scalar>(g: &mut Graph<T>, q: Var, k: Var, v: Var) -> Result<Var> {
    linear_attention_traced(g, q, k, v).map(|(o, _, _)| o)
}

/// Dense `(Q̃·K̃ᵀ)` for inspection; never used on the compute path.
pub fn dense_attention_logits<T: Scalar>(q_tilde: &Tensor<T>, k_tilde: &Tensor<T>) -> Result<Tensor<T>> {
    q_tilde.matmul(&k_tilde.transpose())
}

/// Normalized query and key of one attention substep.
#[derive(Debug, Clone, Copy, Default)]
pub struct PcmTrace {
    pub solid: Option<(Var, Var)>,
    pub fluid: Option<(Var, Var)>,
    pub interface: Option<(Var, Var)>,
}

/// Register parameters of one coupling module of width `width` on `nodes` grid nodes.
/// Key maps carry no bias: the softmax over the sequence cancels any per-channel shift.
pub fn init_pcm_params<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    rng: &mut R,
    name: &str,
    width: usize,
    nodes: usize,
    k: usize,
) -> Result<()> {
    for step in ["solid", "fluid", "interface"] {
        store.init_linear(rng, &format!("{name}.{step}.q"), width, width)?;
        store.init_weight(rng, &format!("{name}.{step}.k"), width, width)?;
        store.init_linear(rng, &format!("{name}.{step}.v"), width, width)?;
    }
    store.init_linear(rng, &format!("{name}.grid.msg"), 3 * width, width)?;
    store.insert(&format!("{name}.gamma"), Tensor::zeros(&[nodes, k]), true)?;
    store.insert(&format!("{name}.beta"), Tensor::zeros(&[nodes, k]), true)
}

/// Scalar count of [`init_pcm_params`].
pub fn pcm_param_count(width: usize, nodes: usize, k: usize) -> usize {
    12 * width * width + 7 * width + 2 * nodes * k
}

/// Hidden width of the variant's feed-forward block chosen so that its
/// parameter count matches the coupling module at the same width.
pub fn simple_ffn_hidden(width: usize, nodes: usize, k: usize) -> usize {
    let target = pcm_param_count(width, nodes, k) as f64;
    let base = (3 * width * width + 3 * width) as f64;
    (((target - base) / (2 * width + 1) as f64).round() as usize).max(1)
}

pub fn simple_param_count(width: usize, hidden: usize) -> usize {
    3 * width * width + 2 * width + 2 * width * hidden + hidden + width
}

pub fn init_simple_params<T: Scalar, R: Rng>(
    store: &mut ParameterStore<T>,
    rng: &mut R,
    name: &str,
    width: usize,
    nodes: usize,
    k: usize,
) -> Result<()> {
    store.init_linear(rng, &format!("{name}.q"), width, width)?;
    store.init_weight(rng, &format!("{name}.k"), width, width)?;
    store.init_linear(rng, &format!("{name}.v"), width, width)?;
    let hidden = simple_ffn_hidden(width, nodes, k);
    store.init_ffn(rng, &format!("{name}.ffn"), width, hidden, width)
}

/// Queries from `queries`, keys and values from `context`, each block offset by `g_a`.
fn attend<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    queries: &[Var],
    context: &[Var],
    g_a: Var,
) -> Result<(Vec<Var>, (Var, Var))> {
    let with_pos = |g: &mut Graph<T>, blocks: &[Var]| -> Result<Var> {
        let shifted = blocks
            .iter()
            .map(|&b| g.add(b, g_a))
            .collect::<Result<Vec<_>>>()?;
        g.concat_rows(&shifted)
    };
    let qin = with_pos(g, queries)?;
    let kvin = with_pos(g, context)?;
    let q = linear(g, store, &format!("{name}.q"), qin)?;
    let k = project(g, store, &format!("{name}.k"), kvin)?;
    let v = linear(g, store, &format!("{name}.v"), kvin)?;
    let (out, qt, kt) = linear_attention_traced(g, q, k, v)?;
    Ok((g.chunk_rows(out, queries.len())?, (qt, kt)))
}

/// `(p_s', p_b')` from solid-side queries against the whole system.
pub fn update_solid<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    s: &CouplingState,
) -> Result<(Var, Var, (Var, Var))> {
    let (out, trace) = attend(
        g,
        store,
        &format!("{name}.solid"),
        &[s.p_s, s.p_b],
        &[s.p_s, s.p_f, s.p_b],
        s.g_a,
    )?;
    Ok((out[0], out[1], trace))
}

/// `(p_f', p_b'')` from fluid-side queries against the whole system.
pub fn update_fluid<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    s: &CouplingState,
) -> Result<(Var, Var, (Var, Var))> {
    let (out, trace) = attend(
        g,
        store,
        &format!("{name}.fluid"),
        &[s.p_f, s.p_b],
        &[s.p_s, s.p_f, s.p_b],
        s.g_a,
    )?;
    Ok((out[0], out[1], trace))
}

/// `(p_s'', p_f'', p_b''')` by self-attention over all three blocks.
pub fn update_interface<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    s: &CouplingState,
) -> Result<(Var, Var, Var, (Var, Var))> {
    let blocks = [s.p_s, s.p_f, s.p_b];
    let (out, trace) = attend(g, store, &format!("{name}.interface"), &blocks, &blocks, s.g_a)?;
    Ok((out[0], out[1], out[2], trace))
}

/// Learned mesh velocity smoothed over neighbors, explicit step, then geometry smoothing.
pub fn update_grid<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    s: &CouplingState,
    edges: &Arc<[usize]>,
    dt: T,
) -> Result<Var> {
    let cat = g.concat_cols(&[s.p_s, s.p_f, s.p_b])?;
    let msg = linear(g, store, &format!("{name}.grid.msg"), cat)?;
    let gamma = g.param(store, &format!("{name}.gamma"))?;
    let gamma = g.softmax(gamma, Axis::Cols)?;
    let velocity = g.neighbor_mix(gamma, msg, edges.clone())?;
    let step = g.scale(velocity, dt)?;
    let moved = g.add(s.g_a, step)?;
    let beta = g.param(store, &format!("{name}.beta"))?;
    let beta = g.softmax(beta, Axis::Cols)?;
    g.neighbor_mix(beta, moved, edges.clone())
}

/// Run the four substeps in `ordering`; each reads the freshest available blocks.
pub fn pcm_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    state: CouplingState,
    edges: &Arc<[usize]>,
    ordering: OrderingSpec,
    dt: T,
) -> Result<(CouplingState, PcmTrace)> {
    state.check(g)?;
    let mut s = state;
    let mut trace = PcmTrace::default();
    for step in ordering.steps() {
        match step {
            Step::Solid => {
                let (ps, pb, t) = update_solid(g, store, name, &s)?;
                s.p_s = ps;
                s.p_b = pb;
                trace.solid = Some(t);
            }
            Step::Grid => s.g_a = update_grid(g, store, name, &s, edges, dt)?,
            Step::Fluid => {
                let (pf, pb, t) = update_fluid(g, store, name, &s)?;
                s.p_f = pf;
                s.p_b = pb;
                trace.fluid = Some(t);
            }
            Step::Interface => {
                let (ps, pf, pb, t) = update_interface(g, store, name, &s)?;
                s.p_s = ps;
                s.p_f = pf;
                s.p_b = pb;
                trace.interface = Some(t);
            }
        }
    }
    Ok((s, trace))
}

/// One linear attention over `[p_s; p_f; p_b; g_a]` followed by a feed-forward block.
pub fn simple_attention_variant<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    name: &str,
    state: CouplingState,
) -> Result<CouplingState> {
    state.check(g)?;
    let x = g.concat_rows(&[state.p_s, state.p_f, state.p_b, state.g_a])?;
    let q = linear(g, store, &format!("{name}.q"), x)?;
    let k = project(g, store, &format!("{name}.k"), x)?;
    let v = linear(g, store, &format!("{name}.v"), x)?;
    let att = linear_attention(g, q, k, v)?;
    let out = ffn(g, store, &format!("{name}.ffn"), att)?;
    let parts = g.chunk_rows(out, 4)?;
    Ok(CouplingState {
        p_s: parts[0],
        p_f: parts[1],
        p_b: parts[2],
        g_a: parts[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_parsing() {
        let o: OrderingSpec = "solid-grid-fluid-interface".parse().unwrap();
        assert_eq!(o, OrderingSpec::DEFAULT);
        assert_eq!(o.to_string(), "solid-grid-fluid-interface");
        assert!("solid-solid-fluid-interface".parse::<OrderingSpec>().is_err());
        assert!("solid-grid-fluid".parse::<OrderingSpec>().is_err());
        assert!("solid-grid-fluid-wall".parse::<OrderingSpec>().is_err());
        assert_eq!(OrderingSpec::studied().len(), 6);
    }

    #[test]
    fn singleton_attention_returns_value() {
        let mut g: Graph<f64> = Graph::new();
        let q = g.constant(Tensor::matrix(1, 1, vec![0.3]).unwrap()).unwrap();
        let k = g.constant(Tensor::matrix(1, 1, vec![-2.0]).unwrap()).unwrap();
        let v = g.constant(Tensor::matrix(1, 1, vec![7.5]).unwrap()).unwrap();
        let o = linear_attention(&mut g, q, k, v).unwrap();
        assert_eq!(g.value(o).data(), &[7.5]);
    }

    #[test]
    fn attention_width_mismatch() {
        let mut g: Graph<f64> = Graph::new();
        let q = g.constant(Tensor::zeros(&[2, 3])).unwrap();
        let k = g.constant(Tensor::zeros(&[4, 2])).unwrap();
        let v = g.constant(Tensor::zeros(&[4, 3])).unwrap();
        assert!(linear_attention(&mut g, q, k, v).is_err());
    }

    #[test]
    fn simple_variant_matches_parameter_budget() {
        for (d, m, k) in [(8, 16, 3), (8, 4, 3), (32, 256, 6), (64, 256, 6), (64, 64, 6)] {
            let pcm = pcm_param_count(d, m, k) as f64;
            let simple = simple_param_count(d, simple_ffn_hidden(d, m, k)) as f64;
            assert!((simple - pcm).abs() / pcm <= 0.05, "d={d} m={m}");
        }
    }
}

//! End-to-end surrogate: embedding, multiscale latent pathways, coupling
//! levels, cross-scale fusion and output heads.

mod config;
mod loss;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{parse_key_values, ModelConfig, Processor, Task};
pub use loss::{
    apply_boundary_mask, compute_loss, inject_noise, record_loss, BoundaryMask,
};

use crate::error::{invalid, Result};
use crate::geometry::{
    init_grid_params, knn_edges, record_latent_coords, seed_regular_grid, Domain,
    DomainObservation, KnnGraph, SystemState,
};
use crate::pcm::{
    init_pcm_params, init_simple_params, pcm_forward, simple_attention_variant, CouplingState,
    PcmTrace,
};
use crate::projection::{
    aggregate_pathways, decode_domain, encode_domain, init_aggregate_params, init_encoder_params,
};
use crate::tensor_core::gradcheck::Objective;
use crate::tensor_core::graph::{Graph, Var};
use crate::tensor_core::nn::linear;
use crate::tensor_core::params::{uniform, ParameterStore};
use crate::tensor_core::tensor::{Scalar, Tensor};

/// Predicted next state of all three domains (normalized space unless stated otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub fluid: DomainObservation<T>,
    pub solid: DomainObservation<T>,
    pub interface: DomainObservation<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn domain(&self, d: Domain) -> &DomainObservation<T> {
        match d {
            Domain::Fluid => &self.fluid,
            Domain::Solid => &self.solid,
            Domain::Interface => &self.interface,
        }
    }

    pub fn domain_mut(&mut self, d: Domain) -> &mut DomainObservation<T> {
        match d {
            Domain::Fluid => &mut self.fluid,
            Domain::Solid => &mut self.solid,
            Domain::Interface => &mut self.interface,
        }
    }

    /// Next-step input state carrying over conditions of `previous`.
    pub fn into_state(self, previous: &SystemState<T>, time: f64) -> SystemState<T> {
        SystemState {
            fluid: self.fluid,
            solid: self.solid,
            interface: self.interface,
            conditions: previous.conditions.clone(),
            time,
        }
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    /// Stacked `[positions | quantities]` predictions in domain order fluid, solid, interface.
    pub outputs: [Var; 3],
    /// Attention trace per level and pathway (empty traces for the single-attention variant).
    pub traces: Vec<Vec<PcmTrace>>,
    /// Neighbor lists per pathway.
    pub edges: Vec<KnnGraph>,
}

fn domain_index(d: Domain) -> usize {
    match d {
        Domain::Fluid => 0,
        Domain::Solid => 1,
        Domain::Interface => 2,
    }
}

fn quantity_channels(cfg: &ModelConfig, d: Domain) -> usize {
    match d {
        Domain::Fluid => cfg.fluid_channels,
        Domain::Solid => cfg.solid_channels,
        Domain::Interface => cfg.interface_channels(),
    }
}

/// Fresh parameters for `cfg`, deterministic in `seed`.
pub fn init_params<T: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ParameterStore<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    for h in 0..cfg.pathways {
        let width = cfg.channels[h];
        init_grid_params(&mut store, &mut rng, &format!("grid.h{h}"), cfg.dim, width)?;
        for d in Domain::ALL {
            let fan_in = cfg.dim + quantity_channels(cfg, d) + cfg.conditions;
            store.init_linear(&mut rng, &format!("embed.h{h}.{d}"), fan_in, width)?;
        }
    }
    for l in 0..cfg.levels {
        for h in 0..cfg.pathways {
            let width = cfg.channels[h];
            for d in Domain::ALL {
                init_encoder_params(&mut store, &mut rng, &format!("level{l}.h{h}.enc.{d}"), width)?;
            }
            let nodes = cfg.grid_nodes(h);
            match cfg.processor {
                Processor::Pcm => init_pcm_params(
                    &mut store,
                    &mut rng,
                    &format!("level{l}.h{h}.pcm"),
                    width,
                    nodes,
                    cfg.knn,
                )?,
                Processor::SimpleAttention => init_simple_params(
                    &mut store,
                    &mut rng,
                    &format!("level{l}.h{h}.simple"),
                    width,
                    nodes,
                    cfg.knn,
                )?,
            }
        }
        for d in Domain::ALL {
            init_aggregate_params(
                &mut store,
                &mut rng,
                &format!("level{l}.agg.{d}"),
                &cfg.channels,
                cfg.ffn_mult,
            )?;
        }
    }
    for d in Domain::ALL {
        let out = cfg.dim + quantity_channels(cfg, d);
        store.init_linear(&mut rng, &format!("head.{d}"), cfg.total_width(), out)?;
    }
    Ok(store)
}

/// `[positions | quantities | conditions]` per point.
fn input_features<T: Scalar>(obs: &DomainObservation<T>, conditions: &[T]) -> Result<Tensor<T>> {
    let stacked = obs.stacked();
    if conditions.is_empty() {
        return Ok(stacked);
    }
    let n = obs.len();
    let mut cond = Vec::with_capacity(n * conditions.len());
    for _ in 0..n {
        cond.extend_from_slice(conditions);
    }
    let cond = Tensor::matrix(n, conditions.len(), cond)?;
    Tensor::concat_cols(&[&stacked, &cond])
}

fn check_state<T: Scalar>(cfg: &ModelConfig, state: &SystemState<T>) -> Result<()> {
    state.validate()?;
    if state.dim() != cfg.dim {
        return Err(invalid!("state is {}-dimensional, model expects {}", state.dim(), cfg.dim));
    }
    for d in Domain::ALL {
        let obs = state.domain(d);
        if obs.is_empty() {
            return Err(invalid!("{d} domain is empty"));
        }
        if obs.channels() != quantity_channels(cfg, d) {
            return Err(invalid!(
                "{d} has {} channels, model expects {}",
                obs.channels(),
                quantity_channels(cfg, d)
            ));
        }
    }
    if state.conditions.len() != cfg.conditions {
        return Err(invalid!(
            "{} condition values, model expects {}",
            state.conditions.len(),
            cfg.conditions
        ));
    }
    Ok(())
}

/// Record the full forward pass on a normalized input state.
pub fn record_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    state: &SystemState<T>,
) -> Result<ForwardRecord> {
    check_state(cfg, state)?;
    let inputs = Domain::ALL
        .iter()
        .map(|&d| {
            let t = input_features(state.domain(d), &state.conditions)?;
            g.constant(t)
        })
        .collect::<Result<Vec<Var>>>()?;

    let mut x: Vec<[Var; 3]> = Vec::with_capacity(cfg.pathways);
    let mut g_a: Vec<Var> = Vec::with_capacity(cfg.pathways);
    let mut edges: Vec<KnnGraph> = Vec::with_capacity(cfg.pathways);
    for h in 0..cfg.pathways {
        let grid = seed_regular_grid::<T>(&cfg.grid_shapes[h])?;
        let coords = record_latent_coords(
            g,
            store,
            &format!("grid.h{h}"),
            &grid,
            &state.fluid.positions,
            &state.solid.positions,
            &state.interface.positions,
        )?;
        edges.push(knn_edges(g.value(coords), cfg.knn)?);
        g_a.push(coords);
        let mut feats = [inputs[0]; 3];
        for d in Domain::ALL {
            let i = domain_index(d);
            feats[i] = linear(g, store, &format!("embed.h{h}.{d}"), inputs[i])?;
        }
        x.push(feats);
    }

    let dt = T::of(cfg.grid_dt);
    let mut traces = Vec::with_capacity(cfg.levels);
    for l in 0..cfg.levels {
        let mut decoded: Vec<[Var; 3]> = Vec::with_capacity(cfg.pathways);
        let mut level_traces = Vec::with_capacity(cfg.pathways);
        for h in 0..cfg.pathways {
            let mut w = [inputs[0]; 3];
            let mut p = [inputs[0]; 3];
            for d in Domain::ALL {
                let i = domain_index(d);
                let name = format!("level{l}.h{h}.enc.{d}");
                (w[i], p[i]) = encode_domain(g, store, &name, x[h][i], g_a[h])?;
            }
            let coupling = CouplingState {
                g_a: g_a[h],
                p_s: p[1],
                p_f: p[0],
                p_b: p[2],
            };
            let (next, trace) = match cfg.processor {
                Processor::Pcm => {
                    let nb: Arc<[usize]> = edges[h].neighbors.clone();
                    pcm_forward(
                        g,
                        store,
                        &format!("level{l}.h{h}.pcm"),
                        coupling,
                        &nb,
                        cfg.ordering,
                        dt,
                    )?
                }
                Processor::SimpleAttention => (
                    simple_attention_variant(g, store, &format!("level{l}.h{h}.simple"), coupling)?,
                    PcmTrace::default(),
                ),
            };
            level_traces.push(trace);
            g_a[h] = next.g_a;
            decoded.push([
                decode_domain(g, next.p_f, w[0])?,
                decode_domain(g, next.p_s, w[1])?,
                decode_domain(g, next.p_b, w[2])?,
            ]);
        }
        traces.push(level_traces);
        for d in Domain::ALL {
            let i = domain_index(d);
            let per_path: Vec<Var> = decoded.iter().map(|f| f[i]).collect();
            let fused = aggregate_pathways(g, store, &format!("level{l}.agg.{d}"), &per_path)?;
            for h in 0..cfg.pathways {
                x[h][i] = if cfg.residual {
                    g.add(x[h][i], fused[h])?
                } else {
                    fused[h]
                };
            }
        }
    }

    let mut outputs = [inputs[0]; 3];
    for d in Domain::ALL {
        let i = domain_index(d);
        let joined = if cfg.pathways == 1 {
            x[0][i]
        } else {
            let parts: Vec<Var> = x.iter().map(|f| f[i]).collect();
            g.concat_cols(&parts)?
        };
        outputs[i] = linear(g, store, &format!("head.{d}"), joined)?;
    }
    Ok(ForwardRecord {
        outputs,
        traces,
        edges,
    })
}

/// Unpack recorded outputs into a [`Prediction`].
pub fn prediction_from_record<T: Scalar>(
    g: &Graph<T>,
    record: &ForwardRecord,
    dim: usize,
) -> Result<Prediction<T>> {
    Ok(Prediction {
        fluid: DomainObservation::from_stacked(g.value(record.outputs[0]), dim)?,
        solid: DomainObservation::from_stacked(g.value(record.outputs[1]), dim)?,
        interface: DomainObservation::from_stacked(g.value(record.outputs[2]), dim)?,
    })
}

/// Evaluate the model on a normalized state without keeping the graph.
pub fn model_forward<T: Scalar>(
    store: &ParameterStore<T>,
    cfg: &ModelConfig,
    state: &SystemState<T>,
) -> Result<Prediction<T>> {
    let mut g = Graph::new();
    let record = record_forward(&mut g, store, cfg, state)?;
    prediction_from_record(&g, &record, cfg.dim)
}

/// Training loss of one input/target pair as a precision-generic objective.
pub struct LossObjective<'a> {
    pub cfg: &'a ModelConfig,
    pub input: &'a SystemState<f64>,
    pub target: &'a SystemState<f64>,
}

impl Objective for LossObjective<'_> {
    fn record<T: Scalar>(&mut self, g: &mut Graph<T>, params: &ParameterStore<T>) -> Result<Var> {
        let record = record_forward(g, params, self.cfg, &self.input.cast())?;
        record_loss(g, &record.outputs, &self.target.cast(), self.cfg.task)
    }
}

/// Uniform random state with `n` points per domain in domain order fluid, solid, interface.
pub fn random_state(cfg: &ModelConfig, n: [usize; 3], seed: u64) -> Result<SystemState<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = |rng: &mut ChaCha8Rng, n: usize, c: usize| {
        DomainObservation::new(uniform(rng, &[n, cfg.dim], 1.5), uniform(rng, &[n, c], 1.0))
    };
    SystemState::new(
        obs(&mut rng, n[0], cfg.fluid_channels)?,
        obs(&mut rng, n[1], cfg.solid_channels)?,
        obs(&mut rng, n[2], cfg.interface_channels())?,
        (0..cfg.conditions).map(|i| 0.3 * i as f64 - 0.2).collect(),
        0.0,
    )
}

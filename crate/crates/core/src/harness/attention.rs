//! Dense attention logits of one coupling substep, for inspection only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::geometry::{Domain, SystemState};
use crate::model::{record_forward, ModelConfig, Processor};
use crate::pcm::{dense_attention_logits, linear_attention_combine, Step};
use crate::tensor_core::graph::Graph;
use crate::tensor_core::params::ParameterStore;
use crate::tensor_core::tensor::Tensor;

/// A contiguous segment of rows or columns belonging to one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub domain: Domain,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionDump {
    pub level: usize,
    pub pathway: usize,
    pub step: Step,
    /// Latent nodes per block.
    pub nodes: usize,
    pub rows: Vec<Block>,
    pub cols: Vec<Block>,
    /// `Q̃·K̃ᵀ`, queries by keys.
    pub logits: Tensor<f64>,
    pub q_tilde: Tensor<f64>,
    pub k_tilde: Tensor<f64>,
}

fn blocks(domains: &[Domain], nodes: usize) -> Vec<Block> {
    domains
        .iter()
        .enumerate()
        .map(|(i, &domain)| Block {
            domain,
            start: i * nodes,
            len: nodes,
        })
        .collect()
}

fn label(blocks: &[Block], i: usize) -> String {
    let b = blocks
        .iter()
        .find(|b| i >= b.start && i < b.start + b.len)
        .expect("index inside the block layout");
    format!("{}_{}", b.domain, i - b.start)
}

/// Dense logits of substep `step` at `level` and `pathway` on a normalized input.
pub fn dump_attention(
    store: &ParameterStore<f64>,
    cfg: &ModelConfig,
    input: &SystemState<f64>,
    level: usize,
    pathway: usize,
    step: Step,
) -> Result<AttentionDump> {
    if cfg.processor != Processor::Pcm {
        return Err(invalid!("attention dumps need the coupling-module processor"));
    }
    if level >= cfg.levels {
        return Err(invalid!("level {level} out of range, model has {}", cfg.levels));
    }
    if pathway >= cfg.pathways {
        return Err(invalid!("pathway {pathway} out of range, model has {}", cfg.pathways));
    }
    let mut g = Graph::new();
    let record = record_forward(&mut g, store, cfg, input)?;
    let trace = &record.traces[level][pathway];
    let (entry, row_domains) = match step {
        Step::Solid => (trace.solid, vec![Domain::Solid, Domain::Interface]),
        Step::Fluid => (trace.fluid, vec![Domain::Fluid, Domain::Interface]),
        Step::Interface => (trace.interface, vec![Domain::Solid, Domain::Fluid, Domain::Interface]),
        Step::Grid => return Err(invalid!("the grid substep has no attention")),
    };
    let (qt, kt) = entry.ok_or_else(|| invalid!("substep {} was not recorded", step.name()))?;
    let (q_tilde, k_tilde) = (g.value(qt).clone(), g.value(kt).clone());
    let nodes = cfg.grid_nodes(pathway);
    Ok(AttentionDump {
        level,
        pathway,
        step,
        nodes,
        rows: blocks(&row_domains, nodes),
        cols: blocks(&[Domain::Solid, Domain::Fluid, Domain::Interface], nodes),
        logits: dense_attention_logits(&q_tilde, &k_tilde)?,
        q_tilde,
        k_tilde,
    })
}

/// Rebuild `Q̃·K̃ᵀ` column by column by running the linear path on basis values.
pub fn probe_logits(q_tilde: &Tensor<f64>, k_tilde: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (n, d) = (q_tilde.rows(), q_tilde.cols());
    let m = k_tilde.rows();
    let mut out = Tensor::zeros(&[n, m]);
    for j in 0..m {
        let mut basis = Tensor::zeros(&[m, 1]);
        basis.data_mut()[j] = 1.0;
        let mut g = Graph::new();
        let (q, k, v) = (g.constant(q_tilde.clone())?, g.constant(k_tilde.clone())?, g.constant(basis)?);
        let col = linear_attention_combine(&mut g, q, k, v)?;
        let col = g.value(col);
        for i in 0..n {
            out.data_mut()[i * m + j] = col.at(i, 0) * d as f64;
        }
    }
    Ok(out)
}

impl AttentionDump {
    /// CSV with a header of column labels such as `fluid_3`, and the row label in the first field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for j in 0..self.logits.cols() {
            write!(s, ",{}", label(&self.cols, j)).unwrap();
        }
        s.push('\n');
        for i in 0..self.logits.rows() {
            s.push_str(&label(&self.rows, i));
            for v in self.logits.row(i) {
                write!(s, ",{v:e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainObservation;
    use crate::model::init_params;
    use crate::pcm::OrderingSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn observation(rng: &mut ChaCha8Rng, n: usize, c: usize) -> DomainObservation<f64> {
        let pos = (0..n * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let q = (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DomainObservation::new(Tensor::matrix(n, 2, pos).unwrap(), Tensor::matrix(n, c, q).unwrap()).unwrap()
    }

    fn sample(cfg: &ModelConfig) -> SystemState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        SystemState {
            fluid: observation(&mut rng, 12, cfg.fluid_channels),
            solid: observation(&mut rng, 6, cfg.solid_channels),
            interface: observation(&mut rng, 4, cfg.interface_channels()),
            conditions: vec![0.3; cfg.conditions],
            time: 0.0,
        }
    }

    #[test]
    fn block_row_counts() {
        let cfg = ModelConfig::tiny(1, 1);
        let store = init_params(&cfg, 1).unwrap();
        let x = sample(&cfg);
        for h in 0..cfg.pathways {
            let m = cfg.grid_nodes(h);
            for (step, rows) in [(Step::Solid, 2 * m), (Step::Fluid, 2 * m), (Step::Interface, 3 * m)] {
                let d = dump_attention(&store, &cfg, &x, 0, h, step).unwrap();
                assert_eq!(d.logits.shape(), &[rows, 3 * m]);
                let csv = d.to_csv();
                assert_eq!(csv.lines().count(), rows + 1);
                assert!(csv.lines().next().unwrap().ends_with(&format!("interface_{}", m - 1)));
            }
        }
    }

    #[test]
    fn dense_matches_basis_probes() {
        let mut cfg = ModelConfig::tiny(1, 1);
        for ordering in OrderingSpec::studied() {
            cfg.ordering = ordering;
            let store = init_params(&cfg, 5).unwrap();
            for step in [Step::Solid, Step::Fluid, Step::Interface] {
                let d = dump_attention(&store, &cfg, &sample(&cfg), 0, 1, step).unwrap();
                let probed = probe_logits(&d.q_tilde, &d.k_tilde).unwrap();
                for (a, b) in d.logits.data().iter().zip(probed.data()) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_query_projection_gives_equal_rows() {
        let cfg = ModelConfig::tiny(1, 1);
        let mut store = init_params(&cfg, 2).unwrap();
        for p in ["weight", "bias"] {
            let name = format!("level0.h0.pcm.fluid.q.{p}");
            let shape = store.value(&name).unwrap().shape().to_vec();
            store.set_value(&name, Tensor::zeros(&shape)).unwrap();
        }
        let d = dump_attention(&store, &cfg, &sample(&cfg), 0, 0, Step::Fluid).unwrap();
        let first = d.logits.row(0).to_vec();
        for i in 1..d.logits.rows() {
            for (a, b) in d.logits.row(i).iter().zip(&first) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_indices() {
        let mut cfg = ModelConfig::tiny(1, 1);
        let store = init_params(&cfg, 1).unwrap();
        let x = sample(&cfg);
        assert!(dump_attention(&store, &cfg, &x, cfg.levels, 0, Step::Solid).is_err());
        assert!(dump_attention(&store, &cfg, &x, 0, cfg.pathways, Step::Solid).is_err());
        assert!(dump_attention(&store, &cfg, &x, 0, 0, Step::Grid).is_err());
        cfg.processor = Processor::SimpleAttention;
        let store = init_params(&cfg, 1).unwrap();
        assert!(dump_attention(&store, &cfg, &x, 0, 0, Step::Solid).is_err());
    }
}

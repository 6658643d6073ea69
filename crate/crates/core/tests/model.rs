use fisale::geometry::{DomainObservation, SystemState};
use fisale::model::{init_params, model_forward, random_state, LossObjective, ModelConfig, Processor, Task};
use fisale::tensor_core::{grad_check, Tensor};
use proptest::prelude::*;

fn permute_rows(t: &Tensor<f64>, order: &[usize]) -> Tensor<f64> {
    let data = order.iter().flat_map(|&i| t.row(i).to_vec()).collect();
    Tensor::matrix(t.rows(), t.cols(), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn predictions_keep_point_and_channel_counts(
        nf in 1usize..15,
        ns in 1usize..8,
        nb in 1usize..6,
        cf in 1usize..4,
        cs in 1usize..3,
        dim3 in any::<bool>(),
        simple in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut cfg = ModelConfig::tiny(cf, cs);
        cfg.conditions = 2;
        if dim3 {
            cfg.dim = 3;
            cfg.grid_shapes = vec![vec![2, 2, 2], vec![2, 2, 3]];
        }
        if simple {
            cfg.processor = Processor::SimpleAttention;
        }
        let store = init_params::<f64>(&cfg, seed).unwrap();
        let x = random_state(&cfg, [nf, ns, nb], seed).unwrap();
        let p = model_forward(&store, &cfg, &x).unwrap();
        for (obs, n, c) in [(&p.fluid, nf, cf), (&p.solid, ns, cs), (&p.interface, nb, cf + cs)] {
            prop_assert_eq!(obs.positions.shape(), &[n, cfg.dim]);
            prop_assert_eq!(obs.quantities.shape(), &[n, c]);
        }
    }

    #[test]
    fn fluid_permutation_permutes_prediction(seed in any::<u64>(), order in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let cfg = ModelConfig::tiny(2, 1);
        let store = init_params::<f64>(&cfg, seed).unwrap();
        let x = random_state(&cfg, [12, 6, 4], seed ^ 1).unwrap();
        let mut y = x.clone();
        y.fluid = DomainObservation::new(permute_rows(&x.fluid.positions, &order), permute_rows(&x.fluid.quantities, &order)).unwrap();
        let (px, py) = (model_forward(&store, &cfg, &x).unwrap(), model_forward(&store, &cfg, &y).unwrap());
        let expect = permute_rows(&px.fluid.stacked(), &order);
        for (a, b) in expect.data().iter().zip(py.fluid.stacked().data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in px.solid.stacked().data().iter().zip(py.solid.stacked().data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn default_ordering_passes_gradient_check() {
    let mut cfg = ModelConfig::tiny(2, 1);
    cfg.conditions = 1;
    cfg.task = Task::SingleStep;
    let store = init_params::<f64>(&cfg, 0).unwrap();
    let input: SystemState<f64> = random_state(&cfg, [12, 6, 4], 1).unwrap();
    let target = random_state(&cfg, [12, 6, 4], 2).unwrap();
    let mut obj = LossObjective {
        cfg: &cfg,
        input: &input,
        target: &target,
    };
    let report = grad_check(&mut obj, &store, 1e-4).unwrap();
    assert!(report.passed(), "worst {} at {:?}", report.worst(), report.worst_param());
    assert_eq!(report.entries, store.num_trainable());
}

use fisale::tensor_core::nn::linear;
use fisale::tensor_core::{read_checkpoint, softmax, write_checkpoint, Axis, Graph, ParameterStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor<f64> {
    Tensor::matrix(rows, cols, data).unwrap()
}

fn finite_matrix(max_rows: usize, max_cols: usize, scale: f64) -> impl Strategy<Value = Tensor<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-scale..scale, r * c).prop_map(move |d| matrix(r, c, d))
    })
}

proptest! {
    #[test]
    fn softmax_sums_to_one_along_the_axis(x in finite_matrix(8, 8, 1e3)) {
        let rows = softmax(&x, Axis::Cols).unwrap();
        for i in 0..x.rows() {
            prop_assert!((rows.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let cols = softmax(&x, Axis::Rows).unwrap();
        for j in 0..x.cols() {
            let s: f64 = (0..x.rows()).map(|i| cols.at(i, j)).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
        prop_assert!(rows.data().iter().chain(cols.data()).all(|&v| v >= 0.0));
    }

    #[test]
    fn backward_is_linear_in_the_loss(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::<f64>::new();
        store.init_linear(&mut rng, "lin", 3, 4).unwrap();
        let x = fisale::tensor_core::params::uniform(&mut rng, &[n, 3], 1.0);
        let record = |g: &mut Graph<f64>, store: &ParameterStore<f64>, which: u8| {
            let xv = g.constant(x.clone()).unwrap();
            let y = linear(g, store, "lin", xv).unwrap();
            let a = g.sum_squares(y).unwrap();
            let h = g.gelu(y).unwrap();
            let b = g.sum(h).unwrap();
            match which {
                0 => a,
                1 => b,
                _ => g.add(a, b).unwrap(),
            }
        };
        let mut grads = Vec::new();
        for which in 0..3u8 {
            let mut s = store.clone();
            s.zero_grad();
            let mut g = Graph::new();
            let l = record(&mut g, &s, which);
            g.backward(l, &mut s).unwrap();
            grads.push(s);
        }
        for (name, e) in grads[2].iter() {
            let a = grads[0].grad(name).unwrap();
            let b = grads[1].grad(name).unwrap();
            for (i, &v) in e.grad.data().iter().enumerate() {
                prop_assert!((v - (a.data()[i] + b.data()[i])).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        bits in prop::collection::vec(any::<u64>(), 1..40),
        frozen in any::<bool>(),
    ) {
        let values: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|v| if v.is_finite() { v } else { -0.0 })
            .collect();
        let mut store = ParameterStore::<f64>::new();
        store.insert("a", Tensor::vector(values.clone()).unwrap(), true).unwrap();
        store.insert("b.weight", matrix(1, values.len(), values.clone()), !frozen).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&store, &mut buf).unwrap();
        let back: ParameterStore<f64> = read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 2);
        for (name, e) in store.iter() {
            let b = back.get(name).unwrap();
            prop_assert_eq!(b.trainable, e.trainable);
            prop_assert_eq!(b.value.shape(), e.value.shape());
            let lhs: Vec<u64> = b.value.data().iter().map(|v| v.to_bits()).collect();
            let rhs: Vec<u64> = e.value.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(lhs, rhs);
        }
    }
}

#[test]
fn replay_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParameterStore::<f64>::new();
    store.init_linear(&mut rng, "lin", 5, 5).unwrap();
    let x = fisale::tensor_core::params::uniform(&mut rng, &[9, 5], 2.0);
    let run = || {
        let mut s = store.clone();
        let mut g = Graph::new();
        let xv = g.constant(x.clone()).unwrap();
        let y = linear(&mut g, &s, "lin", xv).unwrap();
        let y = g.softmax(y, Axis::Rows).unwrap();
        let l = g.sum_squares(y).unwrap();
        g.backward(l, &mut s).unwrap();
        let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        (bits(g.value(y)), bits(s.grad("lin.weight").unwrap()))
    };
    assert_eq!(run(), run());
}

use fisale::data_io::*;
use fisale::geometry::{Domain, DomainObservation, SystemState};
use fisale::tensor_core::Tensor;
use proptest::prelude::*;

/// Any f32 bit pattern that is finite, widened to f64.
fn finite_f32() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite()).prop_map(f64::from),
        Just(-0.0),
        Just(f32::from_bits(1) as f64),
        Just(-(f32::MIN_POSITIVE as f64) / 2.0),
    ]
}

fn observation(n: usize, d: usize, c: usize, v: Vec<f64>) -> DomainObservation<f64> {
    let (p, q) = v.split_at(n * d);
    DomainObservation::new(Tensor::matrix(n, d, p.to_vec()).unwrap(), Tensor::matrix(n, c, q.to_vec()).unwrap()).unwrap()
}

prop_compose! {
    fn trajectory()(d in 1usize..=3, t in 1usize..4, n in prop::array::uniform3(1usize..5), cf in 1usize..3, cs in 1usize..3)
        (values in prop::collection::vec(finite_f32(), t * (n[0] * (d + cf) + n[1] * (d + cs) + n[2] * (d + cf + cs))),
         d in Just(d), t in Just(t), n in Just(n), cf in Just(cf), cs in Just(cs)) -> Trajectory {
        let per = n[0] * (d + cf) + n[1] * (d + cs) + n[2] * (d + cf + cs);
        let frames = values.chunks(per).enumerate().map(|(k, v)| {
            let (f, rest) = v.split_at(n[0] * (d + cf));
            let (s, b) = rest.split_at(n[1] * (d + cs));
            SystemState::new(
                observation(n[0], d, cf, f.to_vec()),
                observation(n[1], d, cs, s.to_vec()),
                observation(n[2], d, cf + cs, b.to_vec()),
                vec![],
                k as f64,
            ).unwrap()
        }).collect::<Vec<_>>();
        assert_eq!(frames.len(), t);
        Trajectory::new("p", frames, vec![]).unwrap()
    }
}

fn bits(t: &Trajectory) -> Vec<u32> {
    t.frames
        .iter()
        .flat_map(|f| Domain::ALL.map(|d| f.domain(d).clone()))
        .flat_map(|o| o.positions.data().iter().chain(o.quantities.data()).map(|&v| (v as f32).to_bits()).collect::<Vec<_>>())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]
    #[test]
    fn round_trip_is_bit_exact(t in trajectory()) {
        let mut buf = Vec::new();
        write_trajectory_to(&t, &mut buf).unwrap();
        let layout = t.layout().unwrap();
        prop_assert_eq!(buf.len(), HEADER_BYTES + 4 * t.len() * layout.frame_len());
        let back = read_trajectory_from(buf.as_slice(), "p", &[], 1.0).unwrap();
        prop_assert_eq!(bits(&back), bits(&t));
        prop_assert_eq!(back.layout().unwrap(), layout);
    }

    #[test]
    fn any_truncation_is_rejected(t in trajectory(), cut in 0.0f64..1.0) {
        let mut buf = Vec::new();
        write_trajectory_to(&t, &mut buf).unwrap();
        let keep = (cut * buf.len() as f64) as usize;
        prop_assert!(read_trajectory_from(&buf[..keep], "p", &[], 1.0).is_err());
    }
}

fn constant_trajectory(id: &str, v: f64, conditions: Vec<f64>) -> Trajectory {
    let o = |n, c| DomainObservation::new(Tensor::full(&[n, 2], v), Tensor::full(&[n, c], v)).unwrap();
    let f = SystemState::new(o(3, 2), o(2, 1), o(2, 3), conditions.clone(), 0.0).unwrap();
    Trajectory::new(id, vec![f], conditions).unwrap()
}

#[test]
fn stats_examples() {
    let s = compute_norm_stats(&[constant_trajectory("a", 4.0, vec![1.0])]).unwrap();
    assert_eq!(s.fluid.quantities.mean, vec![4.0, 4.0]);
    assert_eq!(s.fluid.quantities.std, vec![1e-8, 1e-8]);
    let s = compute_norm_stats(&[constant_trajectory("a", -1.0, vec![]), constant_trajectory("b", 1.0, vec![])]).unwrap();
    assert_eq!(s.solid.quantities.mean, vec![0.0]);
    assert_eq!(s.solid.quantities.std, vec![1.0]);
    assert!(compute_norm_stats(&[]).is_err());
}

fn piston_dataset(dir: &std::path::Path, n: usize, ood: f64) -> Manifest {
    let spec = PistonDatasetSpec {
        trajectories: n,
        steps: 20,
        ood_fraction: ood,
        seed: 3,
        ..Default::default()
    };
    gen_piston_dataset(dir, &spec).unwrap();
    build_manifest(dir, SplitRatios::default(), 11).unwrap()
}

#[test]
fn manifest_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let m = piston_dataset(dir.path(), 12, 1.0 / 6.0);
    assert_eq!((m.splits.train.len(), m.splits.val.len(), m.splits.test.len(), m.splits.ood.len()), (8, 1, 1, 2));
    let back = Manifest::read(&manifest_path(dir.path())).unwrap();
    assert_eq!(back, m);
    let again = build_manifest(dir.path(), SplitRatios::default(), 11).unwrap();
    assert_eq!(again.splits, m.splits);
    for id in &m.splits.ood {
        let e = m.entry(id).unwrap();
        assert!(e.ood && e.conditions[0] > 200.0);
    }
    let t = m.load(dir.path(), &m.splits.test[0]).unwrap();
    assert_eq!(t.len(), 21);
    assert_eq!(t.frames[4].time, 4.0 * m.dt);
    assert_eq!(t.frames[0].conditions.len(), 4);
}

#[test]
fn stats_use_only_the_train_split() {
    let dir = tempfile::tempdir().unwrap();
    let m = piston_dataset(dir.path(), 10, 0.0);
    for id in m.splits.val.iter().chain(&m.splits.test) {
        std::fs::remove_file(dir.path().join(&m.entry(id).unwrap().file)).unwrap();
    }
    let train = m.load_split(dir.path(), Split::Train).unwrap();
    assert_eq!(&compute_norm_stats(&train).unwrap(), m.stats().unwrap());
}

#[test]
fn train_split_normalizes_to_unit_scale() {
    let dir = tempfile::tempdir().unwrap();
    let m = piston_dataset(dir.path(), 10, 0.0);
    let stats = m.stats().unwrap();
    let train = m.load_split(dir.path(), Split::Train).unwrap();
    let normalized: Vec<SystemState<f64>> = train.iter().flat_map(|t| &t.frames).map(|f| stats.normalize_state(f).unwrap()).collect();
    let check = |rows: Vec<Vec<f64>>| {
        let c = rows[0].len();
        for k in 0..c {
            let v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-6 || std < 1e-6, "std {std}");
        }
    };
    let rows_of = |t: &Tensor<f64>| (0..t.rows()).map(|i| t.row(i).to_vec()).collect::<Vec<_>>();
    for d in Domain::ALL {
        check(normalized.iter().flat_map(|f| rows_of(&f.domain(d).quantities)).collect());
    }
    check(normalized.iter().flat_map(|f| Domain::ALL.into_iter().flat_map(|d| rows_of(&f.domain(d).positions))).collect());
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(build_manifest(dir.path(), SplitRatios::default(), 0).is_err());
}

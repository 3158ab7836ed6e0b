use colagnn::data::{
    make_windows, prepare, split_points, window_count, AdjacencyMatrix, EpiDataset, Normalizer, SplitSpec,
};
use colagnn::diffcore::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn dataset(n: usize, t: usize, values: Vec<f64>) -> EpiDataset {
    EpiDataset::new(
        (0..n).map(|i| format!("loc{i}")).collect(),
        (0..t).map(|w| format!("w{w}")).collect(),
        Tensor::new(vec![n, t], values).unwrap(),
    )
    .unwrap()
}

fn random_dataset(max_n: usize, t: std::ops::Range<usize>) -> impl Strategy<Value = EpiDataset> {
    (2..=max_n, t).prop_flat_map(|(n, t)| {
        prop::collection::vec(0.0f64..5000.0, n * t).prop_map(move |v| dataset(n, t, v))
    })
}

proptest! {
    #[test]
    fn normalizer_round_trip(ds in random_dataset(6, 2..60)) {
        let norm = Normalizer::fit(&ds).unwrap();
        let scaled = norm.apply(&ds).unwrap();
        for i in 0..ds.num_locations() {
            if norm.max[i] == norm.min[i] {
                continue;
            }
            for t in 0..ds.num_weeks() {
                let z = scaled.value(i, t);
                prop_assert!((0.0..=1.0).contains(&z));
                prop_assert!((norm.invert_value(i, z) - ds.value(i, t)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn windows_stay_inside_their_split(ds in random_dataset(3, 60..200), w in 1usize..12, h in 1usize..8) {
        let data = prepare(&ds, &SplitSpec::new(w, h));
        let (v0, t0) = split_points(ds.num_weeks(), SplitSpec::new(w, h).ratios).unwrap();
        let Ok(data) = data else {
            // Some split is shorter than W+h.
            return Ok(());
        };
        let bounds = [(0, v0, &data.train), (v0, t0, &data.val), (t0, ds.num_weeks(), &data.test)];
        for (lo, hi, set) in bounds {
            prop_assert_eq!(set.len(), window_count(hi - lo, w, h));
            prop_assert_eq!(set.len(), hi - lo - w - h + 1);
            for s in &set.samples {
                let first_input = s.target_week + 1 - w - h;
                prop_assert!(first_input >= lo && s.target_week < hi);
            }
        }
    }

    #[test]
    fn window_targets_match_series(ds in random_dataset(4, 10..40), w in 1usize..5, h in 1usize..5) {
        let set = make_windows(&ds, w, h, "train").unwrap();
        for (s, sample) in set.samples.iter().enumerate() {
            for i in 0..ds.num_locations() {
                prop_assert_eq!(sample.target[i], ds.value(i, s + w + h - 1));
                prop_assert_eq!(sample.input.row_slice(i), &ds.series(i)[s..s + w]);
            }
        }
    }

    #[test]
    fn normalized_adjacency_spectrum(n in 1usize..=12, bits in prop::collection::vec(any::<bool>(), 66)) {
        let mut raw = Tensor::identity(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if bits[k] {
                    raw.set(i, j, 1.0);
                    raw.set(j, i, 1.0);
                }
                k += 1;
            }
        }
        let a = AdjacencyMatrix::from_raw(raw).unwrap();
        let m = DMatrix::from_row_slice(n, n, a.normalized().data());
        prop_assert_eq!(&m, &m.transpose());
        for ev in SymmetricEigen::new(m).eigenvalues.iter() {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(ev));
        }
    }
}

#[test]
fn window_count_examples() {
    assert_eq!(window_count(100, 20, 5), 76);
    assert_eq!(window_count(25, 20, 5), 1);
    let ds = dataset(2, 3, vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
    let set = make_windows(&ds, 1, 1, "train").unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.samples[0].input.data(), &[1.0, 10.0]);
    assert_eq!(set.samples[0].target, vec![2.0, 20.0]);
    assert_eq!(set.samples[1].target, vec![3.0, 30.0]);
}

#[test]
fn constant_location_maps_to_zero_and_back() {
    let ds = dataset(2, 4, vec![7.0, 7.0, 7.0, 7.0, 1.0, 2.0, 3.0, 4.0]);
    let norm = Normalizer::fit(&ds).unwrap();
    assert_eq!(norm.apply_value(0, 7.0), 0.0);
    assert_eq!(norm.invert_value(0, 0.4), 7.0);
}

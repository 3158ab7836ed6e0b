use colagnn::checkpoint::Checkpoint;
use colagnn::data::{AdjacencyMatrix, Normalizer};
use colagnn::diffcore::{Graph, Tensor};
use colagnn::experiment::AnyModel;
use colagnn::model::{ColaGnn, ColaGnnConfig, Forecaster, ParamStore, Predictor};
use colagnn::train::l1_loss_node;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(n: usize, w: usize) -> ColaGnnConfig {
    let mut c = ColaGnnConfig::new(n, w);
    c.hidden = 4;
    c.attn_dim = 3;
    c.filters = 3;
    c.filter_len = w.min(4);
    c.graph_dims = vec![3, 2];
    c
}

fn random_adjacency(rng: &mut impl Rng, n: usize) -> AdjacencyMatrix {
    let mut raw = Tensor::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                raw.set(i, j, 1.0);
                raw.set(j, i, 1.0);
            }
        }
    }
    AdjacencyMatrix::from_raw(raw).unwrap()
}

fn random_window(rng: &mut impl Rng, n: usize, w: usize) -> Tensor {
    Tensor::new(vec![n, w], (0..n * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn permute_rows(t: &Tensor, order: &[usize]) -> Tensor {
    Tensor::new(t.shape().to_vec(), order.iter().flat_map(|&i| t.row_slice(i).to_vec()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permuting_locations_permutes_predictions(seed in any::<u64>(), n in 2usize..7, no_temp in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = small_config(n, 6);
        c.use_temporal_conv = !no_temp;
        let adj = random_adjacency(&mut rng, n);
        let model = ColaGnn::new(c.clone(), adj.clone(), &mut rng).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut params = model.params().clone();
        let wm = params.get("gate.Wm").unwrap().clone();
        let mut moved = Tensor::zeros(&[n, n]);
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                moved.set(a, b, wm.get(i, j));
            }
        }
        *params.get_mut("gate.Wm").unwrap() = moved;
        let permuted = ColaGnn::from_parts(c, adj.permute(&order).unwrap(), params).unwrap();

        let x = random_window(&mut rng, n, 6);
        let y = model.predict(&x).unwrap();
        let yp = permuted.predict(&permute_rows(&x, &order)).unwrap();
        for (a, &i) in order.iter().enumerate() {
            prop_assert!((yp[a] - y[i]).abs() < 1e-10, "{} vs {}", yp[a], y[i]);
        }
    }

    #[test]
    fn no_loc_matches_a_fully_gated_model(seed in any::<u64>(), scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut with_attn = small_config(4, 6);
        with_attn.dropout = 0.0;
        let mut without = with_attn.clone();
        without.use_location_attention = false;
        let adj = random_adjacency(&mut rng, 4);
        let full = ColaGnn::new(with_attn.clone(), adj.clone(), &mut rng).unwrap();
        let x = random_window(&mut rng, 4, 6);

        let is_attn = |name: &str| name.starts_with("attn.") || name.starts_with("gate.");
        let mut shared = ParamStore::new();
        for p in full.params().iter().filter(|p| !is_attn(&p.name)) {
            shared.push(p.name.clone(), p.kind, p.value.clone());
        }
        let ablated = ColaGnn::from_parts(without, adj.clone(), shared).unwrap();
        prop_assert!(ablated.params().names().iter().all(|n| !is_attn(n)));
        let base = ablated.predict(&x).unwrap();

        // A gate pinned at 1 makes the fused matrix the adjacency, whatever
        // the attention weights are.
        let mut pinned = full.params().clone();
        for p in pinned.iter_mut().filter(|p| p.name.starts_with("attn.")) {
            p.value = p.value.map(|v| v * scale + 0.3);
        }
        *pinned.get_mut("gate.Wm").unwrap() = Tensor::zeros(&[4, 4]);
        *pinned.get_mut("gate.bm").unwrap() = Tensor::new(vec![1, 1], vec![1e3]).unwrap();
        let gated = ColaGnn::from_parts(with_attn, adj, pinned).unwrap();
        for (a, b) in base.iter().zip(gated.predict(&x).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn nearly_every_parameter_moves_the_loss() {
    let mut c = small_config(5, 8);
    c.filter_len = 8;
    c.graph_dims = vec![2, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = ColaGnn::new(c, random_adjacency(&mut rng, 5), &mut rng).unwrap();
    let samples: Vec<(Tensor, Vec<f64>)> = (0..4)
        .map(|_| (random_window(&mut rng, 5, 8), (0..5).map(|_| rng.random_range(2.0..3.0)).collect()))
        .collect();
    let mut g = Graph::new();
    let p = model.params().bind(&mut g, true);
    let mut total = None;
    for (x, y) in &samples {
        let pred = model.forward(&mut g, &p, x, None).unwrap();
        let l = l1_loss_node(&mut g, pred, y).unwrap();
        total = Some(match total {
            None => l,
            Some(t) => g.add(t, l).unwrap(),
        });
    }
    g.backward(total.unwrap()).unwrap();
    let (mut nonzero, mut all) = (0usize, 0usize);
    for &v in p.vars() {
        let grad = g.grad(v);
        nonzero += grad.data().iter().filter(|x| **x != 0.0).count();
        all += grad.len();
    }
    assert!(nonzero as f64 >= 0.99 * all as f64, "{nonzero} of {all} gradients are nonzero");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let adj = random_adjacency(&mut rng, 4);
    let model = ColaGnn::new(small_config(4, 6), adj, &mut rng).unwrap();
    let norm = Normalizer {
        min: vec![0.1, 2.0, 0.0, 1e-7],
        max: vec![10.0 / 3.0, 2.5, 1e6, 0.3],
    };
    let names = (0..4).map(|i| format!("r{i}")).collect();
    let ck = Checkpoint::new(3, names, norm, AnyModel::ColaGnn(model.clone())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let x = random_window(&mut rng, 4, 6);
    let before: Vec<u64> = model.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
    let after: Vec<u64> = back.model.predict(&x).unwrap().iter().map(|v| v.to_bits()).collect();
    assert_eq!(before, after);
}

#[test]
fn checkpoint_rejects_tampering() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let model = ColaGnn::new(small_config(3, 5), random_adjacency(&mut rng, 3), &mut rng).unwrap();
    let norm = Normalizer { min: vec![0.0; 3], max: vec![1.0; 3] };
    let ck = Checkpoint::new(1, vec!["a".into(), "b".into(), "c".into()], norm, AnyModel::ColaGnn(model)).unwrap();
    let text = ck.to_json();
    assert!(Checkpoint::from_json(&text.replace("colagnn-checkpoint/1", "colagnn-checkpoint/9")).is_err());
    assert!(Checkpoint::from_json(&text.replacen("\"rnn.U\"", "\"rnn.V\"", 1)).is_err());
    assert!(Checkpoint::from_json(&text.replacen("\"horizon\": 1", "\"horizon\": 1, \"extra\": 0", 1)).is_err());
}

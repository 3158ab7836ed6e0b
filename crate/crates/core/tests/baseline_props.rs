use colagnn::baselines::{fit_arma, fit_direct_linear, training_mse, DirectLinearModel, LinearVariant};
use colagnn::data::{WindowSample, WindowSet};
use colagnn::diffcore::Tensor;
use colagnn::model::Predictor;
use colagnn::Execution;
use proptest::prelude::*;

fn windows_from(series: &[Vec<f64>], w: usize) -> WindowSet {
    let t = series[0].len();
    let samples = (0..t - w)
        .map(|s| WindowSample {
            input: Tensor::new(vec![series.len(), w], series.iter().flat_map(|r| r[s..s + w].to_vec()).collect()).unwrap(),
            target: series.iter().map(|r| r[s + w]).collect(),
            target_week: s + w,
        })
        .collect();
    WindowSet { samples, window: w, horizon: 1, series: None, series_offset: 0 }
}

fn random_set() -> impl Strategy<Value = WindowSet> {
    (1usize..=4, 1usize..=5, 0usize..20).prop_flat_map(|(n, w, extra)| {
        let t = w + n * w + 8 + extra;
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, t), n).prop_map(move |s| windows_from(&s, w))
    })
}

fn sse(model: &impl Predictor, set: &WindowSet) -> f64 {
    training_mse(model, set).unwrap() * (set.len() * set.num_locations()) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn no_coordinate_step_improves_the_fit(set in random_set(), variant in prop::sample::select(vec![LinearVariant::Gar, LinearVariant::Ar, LinearVariant::Var])) {
        let (n, w) = (set.num_locations(), set.window);
        let model = fit_direct_linear(&set, variant, Execution::Sequential).unwrap();
        let best = sse(&model, &set);
        let store = model.to_params();
        for (k, name) in store.names().iter().enumerate() {
            for j in 0..store.get(name).unwrap().len() {
                for step in [1e-3, -1e-3] {
                    let mut moved = store.clone();
                    moved.get_mut(name).unwrap().data_mut()[j] += step;
                    let m = DirectLinearModel::from_params(variant, w, n, &moved).unwrap();
                    prop_assert!(sse(&m, &set) >= best - 1e-12 * best.max(1.0), "block {k} coord {j}");
                }
            }
        }
    }

    #[test]
    fn richer_linear_models_fit_no_worse(set in random_set()) {
        let mse = |v| training_mse(&fit_direct_linear(&set, v, Execution::Sequential).unwrap(), &set).unwrap();
        let (g, a, v) = (mse(LinearVariant::Gar), mse(LinearVariant::Ar), mse(LinearVariant::Var));
        let slack = 1e-10;
        prop_assert!(g >= a - slack && a >= v - slack, "GAR {g} AR {a} VAR {v}");
    }

    #[test]
    fn ar_ignores_other_locations(set in random_set(), k in 0usize..64) {
        prop_assume!(set.num_locations() > 1);
        let model = fit_direct_linear(&set, LinearVariant::Ar, Execution::Sequential).unwrap();
        let x = set.samples[k % set.len()].input.clone();
        let mut y = x.clone();
        for t in 0..set.window {
            y.set(1, t, 3.0 - x.get(1, t));
        }
        let (a, b) = (model.predict(&x).unwrap(), model.predict(&y).unwrap());
        prop_assert_eq!(a[0], b[0]);
    }

    #[test]
    fn parallel_fit_equals_sequential(set in random_set()) {
        for v in [LinearVariant::Gar, LinearVariant::Ar, LinearVariant::Var] {
            let s = fit_direct_linear(&set, v, Execution::Sequential).unwrap();
            let p = fit_direct_linear(&set, v, Execution::Parallel).unwrap();
            prop_assert_eq!(s, p);
        }
    }
}

#[test]
fn gar_is_shared_across_identical_locations() {
    let row: Vec<f64> = (0..40).map(|t| ((t as f64) * 0.7).sin() + 1.0).collect();
    let set = windows_from(&[row.clone(), row.clone(), row], 4);
    let model = fit_direct_linear(&set, LinearVariant::Gar, Execution::Sequential).unwrap();
    let y = model.predict(&set.samples[3].input).unwrap();
    assert_eq!(y[0], y[1]);
    assert_eq!(y[1], y[2]);
}

#[test]
fn zero_var_coefficients_give_the_intercept() {
    let set = windows_from(&[vec![0.5; 12], vec![0.25; 12]], 3);
    let model = fit_direct_linear(&set, LinearVariant::Var, Execution::Sequential).unwrap();
    let mut store = model.to_params();
    for name in store.names() {
        if name.ends_with(".coef") {
            store.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
    }
    let zeroed = DirectLinearModel::from_params(LinearVariant::Var, 3, 2, &store).unwrap();
    let y = zeroed.predict(&Tensor::full(&[2, 3], 9.0)).unwrap();
    assert_eq!(y, vec![zeroed.coefficients(0).1, zeroed.coefficients(1).1]);
}

#[test]
fn arma_fits_per_location_in_parallel_identically() {
    let series: Vec<Vec<f64>> = (0..3)
        .map(|i| (0..80).map(|t| ((t as f64) * 0.3 + i as f64).cos() * 0.4 + 0.5).collect())
        .collect();
    let set = windows_from(&series, 6);
    let s = fit_arma(&set, 2, Execution::Sequential).unwrap();
    let p = fit_arma(&set, 2, Execution::Parallel).unwrap();
    assert_eq!(s, p);
    assert_eq!(s.parameter_count(), 3 * (6 + 1 + 6 + 2 + 1));
}

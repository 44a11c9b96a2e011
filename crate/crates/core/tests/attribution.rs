mod common;

use airctl::explain::{
    case_attribution, global_attribution, perturbation_sweep, saliency_profile, shap_exact, shap_sampled,
    time_resolved_attribution, CaseGrid, ConstantPolicy, DeterministicPolicy, LinearPolicy, StateSampler, SweepSpec,
    TimeScenario,
};
use airctl::policy::PolicyParams;
use airctl::scenario::Scenario;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(s: &Scenario, seed: u64) -> PolicyParams {
    let (shift, gain) = s.input_normalization();
    common::default_network(s.obs_dim(), s.act_dim(), seed).with_input_normalization(&shift, &gain).unwrap()
}

fn states(s: &Scenario, seed: u64, n: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StateSampler::new(s.layout(), [-0.3, 0.3]).sample(&mut rng, n)
}

fn labels(s: &Scenario) -> Vec<String> {
    s.layout().labels()
}

#[test]
fn efficiency_holds_on_networks() {
    for name in ["1C1F", "3C1F", "3C3F"] {
        let s = Scenario::preset(name).unwrap();
        let params = network(&s, 3);
        let bg = states(&s, 1, 64);
        for x in states(&s, 2, 10).rows() {
            let r = shap_exact(&params, x, bg.view()).unwrap();
            assert!(r.efficiency_gap().abs() < 1e-9, "{name}: gap {}", r.efficiency_gap());
            let per_action: f64 = r.phi_per_action.iter().flatten().sum();
            assert!((per_action - r.phi.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}

#[test]
fn dead_input_receives_exactly_zero() {
    let s = Scenario::preset("3C3F").unwrap();
    let mut params = network(&s, 5);
    let dead = s.layout().level_index(1);
    params.w1.row_mut(dead).fill(0.0);
    let bg = states(&s, 1, 48);
    for x in states(&s, 2, 6).rows() {
        assert_eq!(shap_exact(&params, x, bg.view()).unwrap().phi[dead], 0.0);
    }
    let profile = saliency_profile(&params, states(&s, 3, 50).view(), &labels(&s)).unwrap();
    assert_eq!(profile.mean_abs_gradient[dead], 0.0);
}

#[test]
fn identically_wired_features_share_credit() {
    let s = Scenario::preset("3C3F").unwrap();
    let layout = s.layout();
    let (j, k) = (layout.forecast_index(0), layout.forecast_index(2));
    let mut params = network(&s, 6);
    let row = params.w1.row(j).to_owned();
    params.w1.row_mut(k).assign(&row);
    params.input_shift[k] = params.input_shift[j];
    params.input_gain[k] = params.input_gain[j];
    let bg = common::symmetrized(&states(&s, 1, 40), j, k);
    for mut x in states(&s, 2, 6).rows().into_iter().map(|r| r.to_owned()) {
        x[k] = x[j];
        let r = shap_exact(&params, x.view(), bg.view()).unwrap();
        assert!((r.phi[j] - r.phi[k]).abs() < 1e-9, "{} vs {}", r.phi[j], r.phi[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_model_closed_form(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, k) = (7, 3);
        let model = LinearPolicy {
            weights: Array2::from_shape_fn((f, k), |_| rng.random_range(-2.0..2.0)),
            bias: Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0)),
        };
        let bg = Array2::from_shape_fn((30, f), |_| rng.random_range(-1.0..1.0));
        let x: Array1<f64> = Array1::from_shape_fn(f, |_| rng.random_range(-1.0..1.0));
        let r = shap_exact(&model, x.view(), bg.view()).unwrap();
        for j in 0..f {
            let mean = bg.column(j).sum() / bg.nrows() as f64;
            for a in 0..k {
                let expected = model.weights[[j, a]] * (x[j] - mean);
                prop_assert!((r.phi_per_action[j][a] - expected).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn exact_matches_brute_force_orderings() {
    for (name, seed) in [("1C1F", 1), ("3C1F", 2)] {
        let s = Scenario::preset(name).unwrap();
        let params = network(&s, seed);
        let bg = states(&s, 10 + seed, 12);
        let f = |x: &[f64]| common::summed_action(&params, x);
        for x in states(&s, 20 + seed, 3).rows() {
            let exact = shap_exact(&params, x, bg.view()).unwrap();
            let oracle = common::shapley_by_orderings(&f, &x.to_vec(), &bg);
            for (a, b) in exact.phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "{name}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn toy_polynomial_matches_brute_force() {
    let f = |x: &[f64]| x[0] * x[1] + x[2].powi(2) - 0.5 * x[0] * x[1] * x[2];
    let model = common::FnPolicy { dim: 3, f };
    let bg = Array2::from_shape_vec((3, 3), vec![0.0, 1.0, -1.0, 0.5, 0.2, 0.3, -0.4, 0.9, 0.0]).unwrap();
    let x = [1.2, -0.7, 0.4];
    let exact = shap_exact(&model, ndarray::ArrayView1::from(&x), bg.view()).unwrap();
    let oracle = common::shapley_by_orderings(&f, &x, &bg);
    for (a, b) in exact.phi.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn sampled_estimator_tracks_exact_and_converges() {
    let s = Scenario::preset("3C3F").unwrap();
    let params = network(&s, 9);
    let bg = states(&s, 1, 64);
    let x = states(&s, 2, 1);
    let exact = shap_exact(&params, x.row(0), bg.view()).unwrap();
    let coarse = shap_sampled(&params, x.row(0), bg.view(), 500, 4).unwrap();
    let fine = shap_sampled(&params, x.row(0), bg.view(), 2000, 5).unwrap();
    let se_coarse = coarse.stderr.clone().unwrap();
    let se_fine = fine.stderr.clone().unwrap();
    for j in 0..exact.phi.len() {
        assert!((fine.phi[j] - exact.phi[j]).abs() <= 3.0 * se_fine[j] + 1e-12, "feature {j}");
        let ratio = se_coarse[j] / se_fine[j];
        assert!((1.4..=2.6).contains(&ratio), "feature {j}: ratio {ratio}");
    }
    assert_eq!(shap_sampled(&params, x.row(0), bg.view(), 500, 4).unwrap(), coarse);
}

#[test]
fn constant_policy_is_silent_everywhere() {
    let s = Scenario::preset("3C1F").unwrap();
    let model = ConstantPolicy { obs_dim: s.obs_dim(), value: vec![0.2, 0.7, 0.1] };
    let bg = states(&s, 1, 16);
    let global = global_attribution(&model, states(&s, 2, 5).view(), bg.view(), &labels(&s)).unwrap();
    assert!(global.mean_abs_phi.iter().all(|&v| v == 0.0));
    let sampled = shap_sampled(&model, bg.row(0), bg.view(), 60, 1).unwrap();
    assert!(sampled.phi.iter().all(|&v| v == 0.0));
    let cases = case_attribution(&model, &CaseGrid::standard(&s.system, 0.5), &s.layout(), bg.view()).unwrap();
    assert_eq!(cases.len(), 9);
    assert!(cases.iter().all(|c| c.result.phi.iter().all(|&v| v == 0.0)));
    let steps =
        time_resolved_attribution(&model, TimeScenario::PressureSweepConstD, 20, &s.layout(), &s.system, 0.5, bg.view())
            .unwrap();
    assert!(steps.iter().all(|t| t.result.phi.iter().all(|&v| v == 0.0)));
}

#[test]
fn single_dominant_feature_tops_both_rankings() {
    let s = Scenario::preset("3C3F").unwrap();
    let n = s.obs_dim();
    for dominant in 0..n {
        let model = common::FnPolicy {
            dim: n,
            f: move |x: &[f64]| (2.0 * x[dominant]).tanh() + 0.05 * x.iter().map(|v| v * v).sum::<f64>(),
        };
        let test = states(&s, 2, 20);
        let global = global_attribution(&model, test.view(), states(&s, 1, 32).view(), &labels(&s)).unwrap();
        let saliency = saliency_profile(&model, states(&s, 3, 100).view(), &labels(&s)).unwrap();
        assert_eq!(common::argmax(&global.mean_abs_phi), dominant);
        assert_eq!(common::argmax(&saliency.mean_abs_gradient), dominant);
    }
}

#[test]
fn shutdown_on_overpressure_gets_negative_pressure_credit() {
    let s = Scenario::preset("3C1F").unwrap();
    let layout = s.layout();
    let cut = layout.normalize_pressure(s.system.p_ref + 0.25);
    let model = common::FnPolicy { dim: s.obs_dim(), f: move |x: &[f64]| if x[0] > cut { 0.0 } else { 1.0 } };
    let bg = states(&s, 1, 64);
    let cases = case_attribution(&model, &CaseGrid::standard(&s.system, 0.5), &layout, bg.view()).unwrap();
    for c in cases.iter().filter(|c| c.pressure == s.system.p_max) {
        assert!(c.result.phi[0] < 0.0);
    }
}

#[test]
fn sweep_reproduces_an_identity_policy() {
    let s = Scenario::preset("1C1F").unwrap();
    let layout = s.layout();
    let j = layout.forecast_index(0);
    let model = common::FnPolicy { dim: s.obs_dim(), f: move |x: &[f64]| x[j] };
    let spec = SweepSpec::standard(&s.system, 21, 0.5).unwrap();
    let rows = perturbation_sweep(&model, &spec, &layout).unwrap();
    assert_eq!(rows.len(), 5 * 21);
    for r in &rows {
        assert_eq!(r.setpoints[0], r.forecast);
    }
}

#[test]
fn linear_saliency_is_the_weight_magnitude() {
    let model = LinearPolicy::single(&[2.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let states = Array2::from_shape_fn((40, 2), |_| rng.random_range(-3.0..3.0));
    let labels = vec!["a".to_string(), "b".to_string()];
    let p = saliency_profile(&model, states.view(), &labels).unwrap();
    assert_eq!(p.mean_abs_gradient, vec![2.0, 0.0]);
    assert_eq!(model.obs_dim(), 2);
}

use prefadapt::gradcheck::{relative_error, run_gradcheck, FD_STEP};
use prefadapt::{
    adapt, adapt_step, batch_gradient, batch_loss, bt_probability, finite_diff_grad, normalize, pair_outcome,
    predict_preferred, AdaptConfig, Choice, Embedding, Execution, PreferencePair,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_vec(dim: usize) -> impl Strategy<Value = Embedding> {
    proptest::collection::vec(-1.0f64..1.0, dim).prop_filter_map("zero vector", |v| normalize(&v).ok())
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&v).unwrap()
}

fn raw(cfg_eps: f64, tau: f64) -> AdaptConfig {
    AdaptConfig {
        epsilon: cfg_eps,
        temperature: tau,
        renormalize: false,
        ..AdaptConfig::default()
    }
}

proptest! {
    #[test]
    fn probability_normalizes(s1 in -1e3f64..1e3, s2 in -1e3f64..1e3, tau in 0.01f64..100.0) {
        let p = bt_probability(s1, s2, tau).unwrap();
        let q = bt_probability(s2, s1, tau).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
        prop_assert!((p + q - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn probability_translation_invariant(s1 in -10.0f64..10.0, s2 in -10.0f64..10.0, c in -1e3f64..1e3, tau in 0.1f64..10.0) {
        let a = bt_probability(s1, s2, tau).unwrap();
        let b = bt_probability(s1 + c, s2 + c, tau).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
    }

    #[test]
    fn probability_saturation_safe(ds in -1e3f64..1e3) {
        let p = bt_probability(ds, 0.0, 1.0).unwrap();
        prop_assert!(p.is_finite() && p > 0.0 && p < 1.0);
        prop_assert!((-p.ln()).is_finite());
    }

    #[test]
    fn outcome_matches_definitions(x in unit_vec(8), w in unit_vec(8), l in unit_vec(8), tau in 0.1f64..20.0) {
        let cfg = raw(0.1, tau);
        let pair = PreferencePair::new(&w, &l).unwrap();
        let out = pair_outcome(&x, &pair, &cfg).unwrap();
        prop_assert!(out.p1 > 0.0 && out.p1 < 1.0);
        prop_assert!((out.loss + out.p1.ln()).abs() <= 1e-12);
        for ((g, a), b) in out.gradient.iter().zip(w.as_slice()).zip(l.as_slice()) {
            prop_assert!((g - (out.p1 - 1.0) * tau * (a - b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn margin_identity(x in unit_vec(6), w in unit_vec(6), l in unit_vec(6), eps in 0.0f64..2.0, tau in 0.1f64..10.0) {
        let cfg = raw(eps, tau);
        let pair = PreferencePair::new(&w, &l).unwrap();
        let p1 = pair_outcome(&x, &pair, &cfg).unwrap().p1;
        let next = adapt_step(&x, &[pair], &cfg).unwrap();
        let margin = |v: &Embedding| v.dot(&w).unwrap() - v.dot(&l).unwrap();
        let gap2: f64 = w.as_slice().iter().zip(l.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        let expected = eps * tau * (1.0 - p1) * gap2;
        prop_assert!(((margin(&next) - margin(&x)) - expected).abs() <= 1e-9);
        prop_assert!(expected >= 0.0);
    }

    #[test]
    fn descent_on_single_pair(x in unit_vec(5), w in unit_vec(5), l in unit_vec(5), frac in 0.01f64..0.99, tau in 0.1f64..5.0) {
        let pair = PreferencePair::new(&w, &l).unwrap();
        let gap2: f64 = w.as_slice().iter().zip(l.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assume!(gap2 > 1e-6);
        let cfg = raw(frac * 2.0 / (tau * tau * gap2), tau);
        let before = batch_loss(&x, &[pair], &cfg).unwrap();
        let next = adapt_step(&x, &[pair], &cfg).unwrap();
        let after = batch_loss(&next, &[pair], &cfg).unwrap();
        let grad = batch_gradient(&x, &[pair], &cfg).unwrap();
        prop_assume!(grad.iter().any(|&g| g != 0.0));
        prop_assert!(after < before, "{} !< {}", after, before);
    }

    #[test]
    fn identical_items_are_fixed_points(x in unit_vec(7), y in unit_vec(7), renormalize in any::<bool>()) {
        let cfg = AdaptConfig { renormalize, ..AdaptConfig::default() };
        let pair = PreferencePair::new(&y, &y).unwrap();
        prop_assert_eq!(adapt_step(&x, &[pair], &cfg).unwrap(), x);
    }

    #[test]
    fn prediction_ignores_positive_scaling(x in unit_vec(4), a in unit_vec(4), b in unit_vec(4), scale in 1e-3f64..1e3) {
        let scaled = Embedding::new(x.as_slice().iter().map(|v| v * scale).collect()).unwrap();
        prop_assert_eq!(predict_preferred(&x, &a, &b).unwrap(), predict_preferred(&scaled, &a, &b).unwrap());
    }

    #[test]
    fn renormalized_trace_stays_unit(x in unit_vec(6), w in unit_vec(6), l in unit_vec(6), steps in 1usize..8) {
        let cfg = AdaptConfig { steps, epsilon: 0.3, ..AdaptConfig::default() };
        let (_, trace) = adapt(&x, &[PreferencePair::new(&w, &l).unwrap()], &cfg).unwrap();
        prop_assert_eq!(trace.steps.len(), steps);
        for s in &trace.steps {
            prop_assert!((s.norm_after - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn prediction_agrees_with_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (x, a, b) = (
            random_unit(&mut rng, 8),
            random_unit(&mut rng, 8),
            random_unit(&mut rng, 8),
        );
        let tau = rng.random_range(0.1..10.0);
        let p = bt_probability(x.dot(&a).unwrap(), x.dot(&b).unwrap(), tau).unwrap();
        let expected = if p >= 0.5 { Choice::First } else { Choice::Second };
        assert_eq!(predict_preferred(&x, &a, &b).unwrap(), expected);
    }
}

#[test]
fn batch_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let cfg = AdaptConfig::default();
    let x = random_unit(&mut rng, 16);
    let items: Vec<Embedding> = (0..16).map(|_| random_unit(&mut rng, 16)).collect();
    let pairs: Vec<_> = items
        .chunks(2)
        .map(|c| PreferencePair::new(&c[0], &c[1]).unwrap())
        .collect();
    let analytic = batch_gradient(&x, &pairs, &cfg).unwrap();
    let numeric = finite_diff_grad(&x, &pairs, &cfg, FD_STEP).unwrap();
    assert!(relative_error(&analytic, &numeric) < 1e-6);
}

#[test]
fn gradient_exact_across_dims() {
    for dim in [2, 16, 64, 768] {
        let report = run_gradcheck(dim, 100, 7, &AdaptConfig::default(), Execution::Parallel).unwrap();
        assert!(report.passed, "{report:?}");
    }
}

#[test]
fn gradient_exact_with_temperature() {
    let cfg = AdaptConfig {
        temperature: 5.0,
        ..AdaptConfig::default()
    };
    let report = run_gradcheck(64, 100, 99, &cfg, Execution::Parallel).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn operations_are_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_unit(&mut rng, 32);
    let items: Vec<Embedding> = (0..10).map(|_| random_unit(&mut rng, 32)).collect();
    let pairs: Vec<_> = items
        .chunks(2)
        .map(|c| PreferencePair::new(&c[0], &c[1]).unwrap())
        .collect();
    let cfg = AdaptConfig::default().with_steps(6);
    let a = adapt(&x, &pairs, &cfg).unwrap();
    let b = adapt(&x, &pairs, &cfg).unwrap();
    assert_eq!(a, b);
    let bits = |e: &Embedding| e.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
}

use std::sync::Arc;

use tempo_core::anneal::AnnealedDensity;
use tempo_core::dists::Family;
use tempo_core::model::{Model, ModelBuilder, Status, Value, VarKind};
use tempo_core::models::{self, add_law, Hmm};
use tempo_core::rng::MersenneSource;
use tempo_core::samplers::{match_samplers, sweep, with_int_doublings, SamplerError};
use tempo_core::testkit::{discrete_mc_test, instance, IdentityKernel, InflatedIntMetropolis};

fn one_int(family: Family, args: Vec<f64>) -> Arc<Model> {
    let mut b = ModelBuilder::new();
    let x = b.add_variable("x", VarKind::Int, Status::Latent, None).unwrap();
    add_law(&mut b, family, x, &[], move |_| args.iter().map(|a| (*a).into()).collect()).unwrap();
    Arc::new(b.build())
}

/// x ~ Exponential(1), k | x ~ Poisson(x), y | k ~ Normal(k, 1) observed.
fn real_and_int() -> Arc<Model> {
    let mut b = ModelBuilder::new();
    let x = b.add_variable("x", VarKind::Real, Status::Latent, None).unwrap();
    let k = b.add_variable("k", VarKind::Int, Status::Latent, None).unwrap();
    let y = b.add_variable("y", VarKind::Real, Status::Observed, Some(Value::Real(2.0))).unwrap();
    add_law(&mut b, Family::Exponential, x, &[], |_| vec![1.0.into()]).unwrap();
    add_law(&mut b, Family::Poisson, k, &[x], move |s| vec![s.real(x).into()]).unwrap();
    add_law(&mut b, Family::Normal, y, &[k], move |s| vec![s.real(k).into(), 1.0.into()]).unwrap();
    Arc::new(b.build())
}

#[test]
fn summary_lists_prototypes() {
    let m = match_samplers(&real_and_int()).unwrap();
    assert_eq!(
        m.summary,
        "2 samplers constructed with following prototypes:\n  RealScalar sampled via: [RealSliceSampler]\n  IntScalar sampled via: [IntSliceSampler]"
    );
}

#[test]
fn kernels_touch_only_neighbouring_factors() {
    let model = Hmm::small().model().unwrap();
    let m = match_samplers(&model).unwrap();
    let counts: Vec<usize> = m.kernels.iter().map(|k| k.connected.len()).collect();
    // Own law, the next state's law, own emission; the last state has no successor.
    assert_eq!(counts, vec![3, 3, 2]);
}

#[test]
fn composite_permutation_model_is_invariant_and_irreducible() {
    let model = Arc::new(models::composite_model(&[0.1, 1.9, 1.2]).unwrap());
    let kernels = match_samplers(&model).unwrap().kernels;
    let report = discrete_mc_test(&model, &kernels, 1.0, 1000).unwrap();
    assert_eq!(report.state_count(), 6);
    assert!(report.invariance_error < 1e-10, "{}", report.invariance_error);
    assert!(report.max_row_sum_error < 1e-12);
    assert!(report.irreducible);
}

#[test]
fn discrete_uniform_slice_is_exactly_invariant() {
    let model = one_int(Family::DiscreteUniform, vec![0.0, 5.0]);
    let kernels = with_int_doublings(&match_samplers(&model).unwrap().kernels, 2);
    let report = discrete_mc_test(&model, &kernels, 1.0, 100).unwrap();
    assert_eq!(report.state_count(), 5);
    assert!(report.is_invariant(1e-10));
    assert!(report.irreducible);
}

#[test]
fn bundled_discrete_models_pass_at_several_temperatures() {
    let hmm = Arc::new(Hmm::small().model().unwrap());
    let ising = Arc::new(models::ising(2, 0.4, 0.1).unwrap());
    let chain = Arc::new(models::markov_chain(vec![0.3, 0.7], vec![vec![0.9, 0.1], vec![0.2, 0.8]], 3, None).unwrap());
    let binom = one_int(Family::Binomial, vec![4.0, 0.3]);
    for (name, model, states) in [("hmm", hmm, 27), ("ising", ising, 16), ("chain", chain, 8), ("binomial", binom, 5)] {
        let kernels = with_int_doublings(&match_samplers(&model).unwrap().kernels, 2);
        for t in [0.0, 0.5, 1.0] {
            let report = discrete_mc_test(&model, &kernels, t, 10_000).unwrap();
            assert_eq!(report.state_count(), states, "{name}");
            assert!(report.is_invariant(1e-10), "{name} at t={t}: {}", report.invariance_error);
            assert!(report.irreducible, "{name} at t={t}");
        }
    }
}

#[test]
fn identity_kernel_is_invariant_but_reducible() {
    let model = one_int(Family::Binomial, vec![3.0, 0.5]);
    let kernels = vec![instance(&model, "x", IdentityKernel)];
    let report = discrete_mc_test(&model, &kernels, 1.0, 100).unwrap();
    assert!(report.is_invariant(1e-12));
    assert!(!report.irreducible);
}

#[test]
fn inflated_acceptance_breaks_invariance() {
    let model = one_int(Family::Binomial, vec![4.0, 0.3]);
    let kernels = vec![instance(&model, "x", InflatedIntMetropolis)];
    let report = discrete_mc_test(&model, &kernels, 1.0, 100).unwrap();
    assert!(report.invariance_error > 1e-3, "{}", report.invariance_error);
}

#[test]
fn point_mass_categorical_stays_put() {
    let mut b = ModelBuilder::new();
    let x = b.add_variable("x", VarKind::Int, Status::Latent, None).unwrap();
    add_law(&mut b, Family::Categorical, x, &[], |_| vec![vec![1.0, 0.0, 0.0].into()]).unwrap();
    let model = Arc::new(b.build());
    let density = AnnealedDensity::new(model.clone());
    let kernels = match_samplers(&model).unwrap().kernels;
    let mut state = model.initial_state();
    let mut rng = MersenneSource::new(1);
    for _ in 0..100 {
        sweep(&kernels, &density, 1.0, &mut state, &mut rng, 3.0).unwrap();
        assert_eq!(state.int(x), 0);
    }
}

#[test]
fn zero_passes_leave_state_unchanged() {
    let model = real_and_int();
    let density = AnnealedDensity::new(model.clone());
    let kernels = match_samplers(&model).unwrap().kernels;
    let mut state = model.initial_state();
    let mut rng = MersenneSource::new(5);
    model.forward_simulate(&mut state, &mut rng).unwrap();
    let before = state.clone();
    sweep(&kernels, &density, 1.0, &mut state, &mut rng, 0.0).unwrap();
    assert_eq!(state, before);
}

#[test]
fn simplex_moves_preserve_the_simplex() {
    let mut b = ModelBuilder::new();
    let p = b.add_variable("p", VarKind::Simplex(4), Status::Latent, None).unwrap();
    let y = b.add_variable("y", VarKind::Int, Status::Observed, Some(Value::Int(2))).unwrap();
    add_law(&mut b, Family::Dirichlet, p, &[], |_| vec![vec![1.0, 2.0, 0.5, 1.0].into()]).unwrap();
    add_law(&mut b, Family::Categorical, y, &[p], move |s| vec![s.simplex(p).to_vec().into()]).unwrap();
    b.add_constrained(p).unwrap();
    let model = Arc::new(b.build());
    let m = match_samplers(&model).unwrap();
    assert!(m.summary.contains("DenseSimplex sampled via: [SimplexSampler]"), "{}", m.summary);
    let density = AnnealedDensity::new(model.clone());
    let mut state = model.initial_state();
    let mut rng = MersenneSource::new(11);
    model.forward_simulate(&mut state, &mut rng).unwrap();
    let mut mean = [0.0; 4];
    let n = 20_000;
    for _ in 0..n {
        sweep(&m.kernels, &density, 1.0, &mut state, &mut rng, 1.0).unwrap();
        let v = state.simplex(p);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|x| *x >= 0.0));
        for (a, b) in mean.iter_mut().zip(v) {
            *a += b / n as f64;
        }
    }
    // Posterior Dirichlet(1, 2, 1.5, 1): mean = alpha / 5.5.
    for (m, a) in mean.iter().zip([1.0, 2.0, 1.5, 1.0]) {
        assert!((m - a / 5.5).abs() < 0.02, "{mean:?}");
    }
}

#[test]
fn one_dimensional_simplex_is_rejected() {
    let mut b = ModelBuilder::new();
    let p = b.add_variable("p", VarKind::Simplex(1), Status::Latent, None).unwrap();
    let y = b.add_variable("y", VarKind::Int, Status::Observed, Some(Value::Int(0))).unwrap();
    add_law(&mut b, Family::Dirichlet, p, &[], |_| vec![vec![1.0].into()]).unwrap();
    add_law(&mut b, Family::Categorical, y, &[p], move |s| vec![s.simplex(p).to_vec().into()]).unwrap();
    b.add_constrained(p).unwrap();
    let model = Arc::new(b.build());
    let density = AnnealedDensity::new(model.clone());
    let m = match_samplers(&model).unwrap();
    let mut state = model.initial_state();
    let mut rng = MersenneSource::new(1);
    let err = sweep(&m.kernels, &density, 1.0, &mut state, &mut rng, 1.0).unwrap_err();
    assert!(matches!(err, SamplerError::SimplexTooSmall(_)));
}

#[test]
fn constrained_real_without_kernel_is_an_error() {
    let mut b = ModelBuilder::new();
    let x = b.add_variable("x", VarKind::Real, Status::Latent, None).unwrap();
    add_law(&mut b, Family::Exponential, x, &[], |_| vec![1.0.into()]).unwrap();
    b.add_constrained(x).unwrap();
    assert!(matches!(match_samplers(&b.build()), Err(SamplerError::NoKernel(_))));
}

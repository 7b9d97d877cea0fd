use std::sync::Arc;

use tempo_core::anneal::LikelihoodParts;
use tempo_core::model::State;
use tempo_core::models::{self, Hmm};
use tempo_core::pt::{
    run_nrpt, stepping_stone_log_z, thermodynamic_log_z, uniform_schedule, update_schedule, CommunicationBarrier,
    Ensemble, PtConfig, PtError,
};
use tempo_core::rng::MersenneSource;

fn accept_all_ensemble(n: usize) -> Ensemble {
    let model = models::conjugate_normal(0.0).unwrap();
    let states: Vec<State> = (0..n).map(|_| model.initial_state()).collect();
    Ensemble::new(uniform_schedule(n), states, vec![LikelihoodParts::default(); n])
}

/// Under accept-all DEO a replica walks a triangle wave of period 2N with a
/// one-scan pause at each end. Phase φ maps to chain φ (φ < N) or 2N−1−φ.
/// A restart is an arrival at the top (phase N−1) after having touched chain 0.
fn closed_form_restarts(n: u64, scans: u64) -> u64 {
    let period = 2 * n;
    (0..n)
        .map(|c| {
            let phase0 = if c % 2 == 0 { c } else { period - 1 - c };
            let mut d = (n - 1 + period - phase0) % period;
            if d == 0 {
                d = period;
            }
            let arrivals = if scans >= d { (scans - d) / period + 1 } else { 0 };
            let started_mid_ascent = phase0 > 0 && phase0 < n - 1;
            if started_mid_ascent && arrivals > 0 {
                arrivals - 1
            } else {
                arrivals
            }
        })
        .sum()
}

#[test]
fn accept_all_restarts_match_closed_form() {
    for n in 2..=4usize {
        for scans in 0..=100u64 {
            let mut e = accept_all_ensemble(n);
            let mut rng = MersenneSource::new(1);
            for s in 0..scans {
                e.deo_swap_phase(s, &mut rng);
            }
            assert_eq!(e.restarts, closed_form_restarts(n as u64, scans), "N={n} S={scans}");
        }
    }
}

#[test]
fn deo_parity_and_ballistic_motion() {
    let mut e = accept_all_ensemble(3);
    let mut rng = MersenneSource::new(1);
    e.deo_swap_phase(0, &mut rng);
    assert_eq!(e.swap_attempts, vec![1, 0]);
    assert_eq!(e.replica_to_chain()[0], 1);
    e.deo_swap_phase(1, &mut rng);
    assert_eq!(e.swap_attempts, vec![1, 1]);
    assert_eq!(e.replica_to_chain()[0], 2);
    assert_eq!(e.restarts, 1);
    let mut seen = e.replica_to_chain().to_vec();
    seen.sort();
    assert_eq!(seen, vec![0, 1, 2]);

    let mut two = accept_all_ensemble(2);
    for s in 0..6 {
        two.deo_swap_phase(s, &mut rng);
    }
    assert_eq!(two.swap_attempts, vec![3]);
    assert!(matches!(two.swap_log_ratio(0, 2), Err(PtError::NotAdjacent(0, 2))));
    assert_eq!(two.swap_log_ratio(0, 1).unwrap(), 0.0);
}

#[test]
fn equal_rejection_grid_is_a_fixed_point() {
    let grid = vec![0.0, 0.05, 0.2, 0.6, 1.0];
    let (new, barrier) = update_schedule(&[0.3; 4], &grid);
    for (a, b) in grid.iter().zip(&new) {
        assert!((a - b).abs() < 1e-10, "{new:?}");
    }
    assert!(barrier.knots_lambda.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn barrier_is_monotone_and_inverse_matches_linear_oracle() {
    let grid = vec![0.0, 0.5, 1.0];
    let (new, barrier) = update_schedule(&[0.9, 0.1], &grid);
    let dense: Vec<f64> = (0..=10_000).map(|i| barrier.value(i as f64 / 10_000.0)).collect();
    assert!(dense.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    // Invert the densely tabulated interpolant by linear interpolation.
    let target = 0.5;
    let k = dense.iter().position(|v| *v >= target).unwrap();
    let (t0, t1) = ((k - 1) as f64 / 10_000.0, k as f64 / 10_000.0);
    let oracle = t0 + (target - dense[k - 1]) / (dense[k] - dense[k - 1]) * (t1 - t0);
    assert!((new[1] - oracle).abs() < 1e-3);
    assert!(new[1] < 0.5);
}

#[test]
fn local_barrier_examples() {
    let grid = uniform_schedule(6);
    let linear = CommunicationBarrier::from_rates(&grid, &[0.2; 5]);
    for (_, l) in linear.local_grid(1000) {
        assert!((l - 1.0).abs() < 1e-9);
    }
    let zero = CommunicationBarrier::from_rates(&grid, &[0.0; 5]);
    assert!(zero.local_grid(1000).iter().all(|(_, l)| *l == 0.0));
    let spike = CommunicationBarrier::from_rates(&grid, &[0.05, 0.05, 0.8, 0.05, 0.05]);
    let values = spike.local_grid(1000);
    assert!(values.iter().all(|(_, l)| *l >= 0.0));
    let (t_max, _) = values.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
    assert!((grid[2]..=grid[3]).contains(&t_max), "{t_max}");
}

#[test]
fn evidence_estimators_on_a_grid() {
    let flat = |x: f64| LikelihoodParts { finite: x, n_zero: 0 };
    let grid = vec![0.0, 0.3, 1.0];
    let samples = vec![vec![flat(-2.0), flat(-2.0)], vec![flat(-2.0)], vec![flat(-2.0)]];
    assert!((stepping_stone_log_z(&samples, &grid).unwrap() + 2.0).abs() < 1e-12);
    assert!((thermodynamic_log_z(&samples, &grid).unwrap() + 2.0).abs() < 1e-12);
    assert!(stepping_stone_log_z(&[vec![], vec![]], &[0.0, 1.0]).is_err());
}

#[test]
fn single_scan_is_one_round_without_adaptation() {
    let model = Arc::new(models::conjugate_normal(0.0).unwrap());
    let out = run_nrpt(&model, &PtConfig { n_chains: 4, n_scans: 1, ..PtConfig::default() }).unwrap();
    assert_eq!(out.rounds.len(), 1);
    assert_eq!(out.rounds[0].schedule, uniform_schedule(4));
    assert_eq!(out.samples.len(), 1);
    assert!(matches!(
        run_nrpt(&model, &PtConfig { n_chains: 1, ..PtConfig::default() }),
        Err(PtError::TooFewChains(1))
    ));
}

#[test]
fn conjugate_evidence_and_progress() {
    let model = Arc::new(models::conjugate_normal(0.0).unwrap());
    let truth = models::conjugate_normal_log_z(0.0);
    let config = PtConfig { n_chains: 16, n_scans: 4095, n_threads: Some(1), ..PtConfig::default() };
    let out = run_nrpt(&model, &config).unwrap();
    assert_eq!(out.rounds.len(), 12);
    assert!((out.log_z_stepping_stone - truth).abs() < 0.05, "{}", out.log_z_stepping_stone);
    let ti = out.log_z_thermodynamic.unwrap();
    assert!((ti - truth).abs() < 0.05, "{ti}");
    let mean: f64 = out.samples.iter().map(|s| s.real(model.lookup("x").unwrap())).sum::<f64>() / out.samples.len() as f64;
    assert!(mean.abs() < 0.06, "{mean}");
    for r in &out.rounds {
        assert!(r.rejection_rates.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

#[test]
fn hard_constraints_omit_thermodynamic_integration() {
    let model = Arc::new(models::doomsday(1.0, Some(1.2)).unwrap());
    let out = run_nrpt(&model, &PtConfig { n_chains: 4, n_scans: 63, ..PtConfig::default() }).unwrap();
    assert!(out.log_z_thermodynamic.is_none());
    assert!(out.log_z_stepping_stone.is_finite());
}

#[test]
fn discrete_posterior_matches_enumeration() {
    let hmm = Hmm::small();
    let model = Arc::new(hmm.model().unwrap());
    let x0 = model.lookup("x").map(|l| model.variable(l).elements[0]).unwrap();
    // Exact marginal of the first hidden state by brute force.
    let mut exact = [0.0; 3];
    let mut state = model.initial_state();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let xs = &model.variable(model.lookup("x").unwrap()).elements;
                state.set_int(xs[0], a);
                state.set_int(xs[1], b);
                state.set_int(xs[2], c);
                exact[a as usize] += model.log_joint(&state).exp();
            }
        }
    }
    let z: f64 = exact.iter().sum();
    exact.iter_mut().for_each(|p| *p /= z);
    let out = run_nrpt(&model, &PtConfig { n_chains: 4, n_scans: 1 << 14, ..PtConfig::default() }).unwrap();
    let n = out.samples.len();
    for k in 0..3 {
        let ind: Vec<f64> = out.samples.iter().map(|s| f64::from(u8::from(s.int(x0) == k as i64))).collect();
        let p = ind.iter().sum::<f64>() / n as f64;
        // Batch-means standard error.
        let b = 32;
        let size = n / b;
        let means: Vec<f64> = (0..b).map(|i| ind[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let var = means.iter().map(|m| (m - p).powi(2)).sum::<f64>() / (b - 1) as f64;
        let se = (var / b as f64).sqrt().max((exact[k] * (1.0 - exact[k]) / n as f64).sqrt());
        assert!((p - exact[k]).abs() < 3.0 * se, "state {k}: {p} vs {} (se {se})", exact[k]);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let model = Arc::new(models::doomsday(1.0, Some(1.2)).unwrap());
    let run = |threads| {
        let out = run_nrpt(&model, &PtConfig { n_chains: 6, n_scans: 255, n_threads: Some(threads), ..PtConfig::default() })
            .unwrap();
        (out.samples, out.log_z_stepping_stone, out.rounds.iter().map(|r| r.schedule.clone()).collect::<Vec<_>>())
    };
    assert_eq!(run(1), run(4));
}

use proptest::prelude::*;
use tempo_core::anneal::LikelihoodParts;
use tempo_core::dists::{Arg, Family, Realization};
use tempo_core::math::log_sum_exp;
use tempo_core::pt::{check_schedule, round_lengths, swap_log_ratio, update_schedule};
use tempo_core::rng::MersenneSource;
use tempo_core::scm::{relative_ess, stratified_indices};

fn grid(gaps: &[f64]) -> Vec<f64> {
    let total: f64 = gaps.iter().sum();
    let mut g = vec![0.0];
    let mut acc = 0.0;
    for d in &gaps[..gaps.len() - 1] {
        acc += d;
        g.push(acc / total);
    }
    g.push(1.0);
    g
}

proptest! {
    #[test]
    fn rounds_cover_the_budget_and_grow(n in 0u64..1_000_000) {
        let r = round_lengths(n);
        prop_assert_eq!(r.iter().sum::<u64>(), n);
        prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.iter().all(|&l| l > 0));
    }

    #[test]
    fn schedule_update_equalizes_the_barrier(
        gaps in prop::collection::vec(0.01f64..1.0, 2..12),
        seed_rates in prop::collection::vec(0.0f64..0.95, 11),
    ) {
        let old = grid(&gaps);
        let rates = &seed_rates[..old.len() - 1];
        let (new, barrier) = update_schedule(rates, &old);
        prop_assert!(check_schedule(&new).is_ok());
        prop_assert_eq!(new.len(), old.len());
        prop_assert!(barrier.knots_lambda.windows(2).all(|w| w[0] <= w[1]));
        let total = barrier.global();
        if total > 1e-3 {
            let n = new.len() - 1;
            for (i, t) in new.iter().enumerate() {
                prop_assert!((barrier.value(*t) - total * i as f64 / n as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn equal_rejections_are_a_fixed_point(gaps in prop::collection::vec(0.01f64..1.0, 2..12), r in 0.05f64..0.9) {
        let old = grid(&gaps);
        let (new, _) = update_schedule(&vec![r; old.len() - 1], &old);
        for (a, b) in old.iter().zip(&new) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn swap_ratio_is_symmetric_under_relabelling(
        ti in 0.0f64..1.0, tj in 0.0f64..1.0, li in -50.0f64..0.0, lj in -50.0f64..0.0,
    ) {
        let (pi, pj) = (LikelihoodParts { finite: li, n_zero: 0 }, LikelihoodParts { finite: lj, n_zero: 0 });
        let a = swap_log_ratio(ti, tj, &pi, &pj);
        prop_assert!((a - swap_log_ratio(tj, ti, &pj, &pi)).abs() < 1e-12);
        let direct = tj * li + ti * lj - ti * li - tj * lj;
        prop_assert!((a - direct).abs() < 1e-9);
    }

    #[test]
    fn annealing_increments_telescope(l in -100.0f64..0.0, zeros in 0u32..3, a in 0.0f64..0.99, b in 0.0f64..0.99, c in 0.0f64..0.99) {
        let p = LikelihoodParts { finite: l, n_zero: zeros };
        let sum = p.increment(a, b) + p.increment(b, c);
        let direct = p.increment(a, c);
        prop_assert!((sum - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn relative_ess_is_bounded_and_shift_invariant(w in prop::collection::vec(-20.0f64..20.0, 1..50), c in -100.0f64..100.0) {
        let r = relative_ess(&w).unwrap();
        let n = w.len() as f64;
        prop_assert!(r >= 1.0 / n - 1e-12 && r <= 1.0 + 1e-12);
        let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
        prop_assert!((relative_ess(&shifted).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn stratified_counts_track_weights(w in prop::collection::vec(-5.0f64..5.0, 1..30), n in 1usize..60, seed in any::<u64>()) {
        let idx = stratified_indices(&w, n, &mut MersenneSource::new(seed));
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.windows(2).all(|p| p[0] <= p[1]));
        let z = log_sum_exp(&w);
        for (j, wj) in w.iter().enumerate() {
            let count = idx.iter().filter(|&&i| i == j).count() as f64;
            prop_assert!((count - n as f64 * (wj - z).exp()).abs() < 2.0);
        }
    }

    #[test]
    fn normal_terms_sum_to_the_closed_form(m in -10.0f64..10.0, v in 0.01f64..10.0, x in -20.0f64..20.0) {
        let args = [Arg::Real(m), Arg::Real(v)];
        let got = Family::Normal.log_density(&args, Realization::Real(x));
        let want = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v);
        prop_assert!((got - want).abs() < 1e-9);
    }
}

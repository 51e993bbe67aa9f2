mod common;

use common::{close, instance};
use overfit_core::bounds::{
    catastrophic_bound, e0_from_sum_l2_lower, e0_lower, e0_upper_big_rank, e0_upper_small_rank,
};
use overfit_core::kappa::{delta_from_kappa, kappa_brackets, solve_kappa};
use overfit_core::mc::{simulate_trial, McConfig};
use overfit_core::risk::{learnability_sums, ridgeless_identities, risk_report};
use overfit_core::tuning::tune_ridge;
use overfit_core::{Spectrum, Target};
use proptest::prelude::*;

fn explicit_spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-12.0f64..2.0, 1..400)
        .prop_map(|logs| logs.into_iter().map(f64::exp).collect())
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn small_rank_below_big_rank_below_its_square(eig in explicit_spectrum(), k_frac in 0.0f64..1.0) {
        let s = Spectrum::explicit(eig.clone()).unwrap();
        let k = (k_frac * eig.len() as f64) as u64;
        let er = s.effective_ranks(k).unwrap();
        prop_assume!(!er.degenerate);
        prop_assert!(er.r_small <= er.r_big * (1.0 + 1e-12));
        prop_assert!(er.r_big <= er.r_small * er.r_small * (1.0 + 1e-12));
    }

    #[test]
    fn consecutive_tails_differ_by_one_eigenvalue(eig in explicit_spectrum(), k_frac in 0.0f64..1.0) {
        let s = Spectrum::explicit(eig.clone()).unwrap();
        let k = (k_frac * eig.len() as f64) as u64;
        let a = s.tail_sums(k).unwrap().s1;
        let b = s.tail_sums(k + 1).unwrap().s1;
        let lam = s.eigenvalue(k + 1);
        prop_assert!(((a - b) - lam).abs() <= 1e-12 * a.max(1e-300), "{a} {b} {lam}");
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn truncated_ranks_match_parametric(alpha in 2.0f64..3.0, k in 0u64..200) {
        let s = Spectrum::power_law(alpha).unwrap();
        let tol = 1e-4;
        let t = s.truncate(tol).unwrap();
        let direct = s.effective_ranks(k).unwrap();
        let via = t.spectrum.effective_ranks(k).unwrap();
        prop_assume!(t.spectrum.positive_count().unwrap() > k + 1);
        // truncation drops a tail of relative size tol·S1(0); relative to the
        // k-tail that is at most tol·S1(0)/S1(k)
        let scale = tol * s.tail_sums(0).unwrap().s1 / s.tail_sums(k).unwrap().s1;
        prop_assert!(close(direct.r_small, via.r_small, 4.0 * scale + 1e-12));
        prop_assert!(close(direct.r_big, via.r_big, 4.0 * scale + 1e-12));
    }

    #[test]
    fn kappa_monotone_in_delta_and_n(index in 0u64..10_000, d1 in 1e-6f64..1.0, d2 in 1e-6f64..1.0) {
        let inst = instance(91, index);
        let (lo, hi) = (d1.min(d2), d1.max(d2) * 10.0);
        let k_lo = solve_kappa(&inst.spec, inst.n, lo).unwrap().kappa;
        let k_hi = solve_kappa(&inst.spec, inst.n, hi).unwrap().kappa;
        prop_assert!(k_lo < k_hi);
        let k0 = solve_kappa(&inst.spec, inst.n, 0.0).unwrap().kappa;
        prop_assert!(k0 < k_lo);
        if inst.n > 1 {
            let k_fewer = solve_kappa(&inst.spec, inst.n - 1, 0.0).unwrap().kappa;
            prop_assert!(k_fewer > k0, "{}", inst.label);
        }
    }

    #[test]
    fn brackets_contain_ridgeless_kappa(index in 0u64..10_000, k_frac in 0.0f64..1.0) {
        let inst = instance(92, index);
        let k = (k_frac * inst.n as f64) as u64;
        let k0 = solve_kappa(&inst.spec, inst.n, 0.0).unwrap().kappa;
        let b = kappa_brackets(&inst.spec, inst.n, k).unwrap();
        prop_assert!(b.lower_big <= k0 * (1.0 + 1e-9), "{b:?} {k0}");
        prop_assert!(b.lower_small <= k0 * (1.0 + 1e-9), "{b:?} {k0}");
        prop_assert!(k0 <= b.upper * (1.0 + 1e-9), "{b:?} {k0}");
    }

    #[test]
    fn delta_round_trip(index in 0u64..10_000, log_delta in -6.0f64..4.0) {
        let inst = instance(93, index);
        let delta = 10f64.powf(log_delta) * inst.spec.trace();
        let sol = solve_kappa(&inst.spec, inst.n, delta).unwrap();
        let back = delta_from_kappa(&inst.spec, inst.n, sol.kappa).unwrap();
        prop_assert!(close(back, delta, 1e-9), "{} -> {back}", delta);
    }

    #[test]
    fn estimates_are_consistent_along_the_path(index in 0u64..10_000, log_delta in -6.0f64..3.0) {
        let inst = instance(94, index);
        let (spec, t, n) = (&inst.spec, &inst.target, inst.n);
        let r0 = risk_report(spec, t, n, 0.0).unwrap();
        prop_assert!((r0.sum_l - n as f64).abs() <= 1e-9 * n as f64);
        prop_assert!(r0.e_delta >= 1.0);

        let delta = 10f64.powf(log_delta) * spec.trace();
        let r = risk_report(spec, t, n, delta).unwrap();
        prop_assert!(r.e_delta <= r0.e_delta * (1.0 + 1e-12));
        // bias at κ₀ plus noise is a floor for every ridge
        let floor = r0.test_risk / r0.e_delta;
        prop_assert!(r.test_risk >= floor * (1.0 - 1e-10), "{} < {floor}", r.test_risk);

        let id = ridgeless_identities(spec, t, n).unwrap();
        prop_assert!(close(id.n_over_e0, id.kappa_weighted, 1e-9));
    }

    #[test]
    fn learnabilities_lie_in_unit_interval(eig in explicit_spectrum(), log_kappa in -10.0f64..3.0) {
        let kappa = log_kappa.exp();
        let mut sorted = eig.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let ls: Vec<f64> = sorted.iter().map(|l| l / (l + kappa)).collect();
        prop_assert!(ls.iter().all(|l| (0.0..=1.0).contains(l)));
        prop_assert!(ls.windows(2).all(|w| w[0] >= w[1]));
        let (sum_l, sum_l2) = learnability_sums(&Spectrum::explicit(eig).unwrap(), kappa).unwrap();
        prop_assert!(close(sum_l, ls.iter().sum(), 1e-12));
        prop_assert!(close(sum_l2, ls.iter().map(|l| l * l).sum(), 1e-12));
    }

    #[test]
    fn cost_sandwich_and_flat_path(index in 0u64..10_000) {
        let inst = instance(95, index);
        let (spec, t, n) = (&inst.spec, &inst.target, inst.n);
        let r = tune_ridge(spec, t, n).unwrap();
        let (cost, e0, lower) = (r.cost.unwrap(), r.e0.unwrap(), r.sandwich_lower.unwrap());
        prop_assert!(cost <= e0 + 1e-8, "{}", inst.label);
        prop_assert!(lower <= cost * (1.0 + 1e-8));
        let top = if r.delta_star_is_infinite() { 1e3 * spec.trace() } else { r.delta_star };
        for j in 0..8 {
            let delta = top * j as f64 / 7.0;
            let risk = risk_report(spec, t, n, delta).unwrap().test_risk;
            prop_assert!(risk <= e0 * r.risk_star * (1.0 + 1e-9), "{} at {delta}", inst.label);
        }
    }

    #[test]
    fn bounds_bracket_e0(index in 0u64..10_000) {
        let inst = instance(96, index);
        let (spec, n) = (&inst.spec, inst.n);
        let e0 = risk_report(spec, &Target::zero(0.0).unwrap(), n, 0.0).unwrap().e_delta;
        for k in 0..n {
            for v in [e0_upper_big_rank(spec, n, k).unwrap(), e0_upper_small_rank(spec, n, k).unwrap()]
                .into_iter()
                .flatten()
            {
                prop_assert!(v >= e0 * (1.0 - 1e-8));
            }
        }
        for b in [0.1, 1.0, 10.0] {
            prop_assert!(e0_lower(spec, n, b).unwrap().e0 <= e0 * (1.0 + 1e-8));
        }
        for k in [n, n + 1, 3 * n] {
            prop_assert!(e0_from_sum_l2_lower(catastrophic_bound(spec, n, k).unwrap()) <= e0 * (1.0 + 1e-8));
        }
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn interpolation_leaves_no_training_error(seed in 0u64..1000, n in 2u64..60, sigma2 in 0.0f64..2.0) {
        let target = Target::power_family(1.5, 20, sigma2).unwrap();
        let scale = sigma2 + target.energy();
        let c = McConfig {
            spectrum: Spectrum::power_law(1.8).unwrap(),
            target,
            n,
            deltas: vec![0.0],
            trials: 1,
            seed,
            features: Some(400),
            threads: Some(1),
        };
        let o = simulate_trial(&c, 0).unwrap()[0];
        prop_assert!(o.train_err <= 1e-16 * scale.max(1e-300) + 1e-300, "{o:?}");
    }
}

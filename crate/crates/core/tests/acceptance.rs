//! Acceptance criteria, one line each.
//!
//! Runs without the libtest harness so the pass/fail lines always print.
//! The process fails when any criterion outside `KNOWN_RED` fails, or when a
//! criterion in `KNOWN_RED` unexpectedly passes.

mod common;

use std::time::{Duration, Instant};

use common::{close, instances};
use overfit_core::bounds::{
    catastrophic_bound, classify, default_k_grid, e0_from_sum_l2_lower, e0_lower,
    e0_upper_big_rank, e0_upper_small_rank, optimistic_gap_check, Verdict,
};
use overfit_core::mc::{validate, McConfig};
use overfit_core::polyregime::{poly_regime_report, BlockKernelSpec, PolyTarget};
use overfit_core::risk::{overfit_coeff, ridgeless_identities, risk_report};
use overfit_core::tuning::{cost_of_overfitting, tune_ridge};
use overfit_core::{Spectrum, Target};

/// Criteria whose thresholds cannot be met by the quantity as defined; the
/// analysis lives alongside the value printed below.
const KNOWN_RED: &[u32] = &[7];

const SUITE_SIZE: u64 = 1000;
const SUITE_SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn isotropic_exactness() -> Outcome {
    let s = Spectrum::isotropic(200).unwrap();
    let t = Target::zero(1.0).unwrap();
    let rep = risk_report(&s, &t, 100, 0.0).unwrap();
    let cost = cost_of_overfitting(&s, &t, 100).unwrap().cost;
    let checks = [
        ("kappa0", rep.kappa, 1.0),
        ("e0", rep.e_delta, 2.0),
        ("cost", cost, 2.0),
        ("norm", rep.hilbert_norm_sq, t.sigma2()),
    ];
    let worst = checks
        .iter()
        .map(|(_, a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    outcome(worst <= 1e-9, format!("worst relative error {worst:.2e}"))
}

fn random_suite() -> Outcome {
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_sandwich = f64::NEG_INFINITY;
    for inst in instances(SUITE_SEED, SUITE_SIZE) {
        let r = tune_ridge(&inst.spec, &inst.target, inst.n).unwrap();
        let (cost, e0, lower) = (r.cost.unwrap(), r.e0.unwrap(), r.sandwich_lower.unwrap());
        worst_gap = worst_gap.max(cost - e0);
        worst_sandwich = worst_sandwich.max(lower - cost);
    }
    outcome(
        worst_gap <= 1e-8 && worst_sandwich <= 1e-8,
        format!(
            "max(C - E0) = {worst_gap:.2e}, max(E0 s2/R* - C) = {worst_sandwich:.2e} over {} instances",
            SUITE_SIZE
        ),
    )
}

fn bounds_dominance() -> Outcome {
    let tol = 1e-8;
    let mut violations = Vec::new();
    let mut checked = 0usize;
    for inst in instances(SUITE_SEED, SUITE_SIZE) {
        let (spec, n) = (&inst.spec, inst.n);
        let e0 = overfit_coeff(spec, n, 0.0).unwrap();
        for k in 0..n {
            for (name, v) in [
                ("big-rank upper", e0_upper_big_rank(spec, n, k).unwrap()),
                ("small-rank upper", e0_upper_small_rank(spec, n, k).unwrap()),
            ] {
                if let Some(v) = v {
                    checked += 1;
                    if v < e0 * (1.0 - tol) {
                        violations.push(format!("{name} k={k} {v} < {e0} ({})", inst.label));
                    }
                }
            }
        }
        for b in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let lb = e0_lower(spec, n, b).unwrap().e0;
            checked += 1;
            if lb > e0 * (1.0 + tol) {
                violations.push(format!(
                    "selection lower b={b} {lb} > {e0} ({})",
                    inst.label
                ));
            }
        }
        for k in [n + 1, 2 * n, 4 * n, 16 * n] {
            let lb = e0_from_sum_l2_lower(catastrophic_bound(spec, n, k).unwrap());
            checked += 1;
            if lb > e0 * (1.0 + tol) {
                violations.push(format!(
                    "catastrophic lower k={k} {lb} > {e0} ({})",
                    inst.label
                ));
            }
        }
    }
    let detail = match violations.first() {
        None => format!("{checked} bound evaluations, no violation"),
        Some(v) => format!("{} violations, first: {v}", violations.len()),
    };
    outcome(violations.is_empty(), detail)
}

fn trichotomy() -> Outcome {
    let grid = default_k_grid();
    let lp = classify(&Spectrum::log_power(2.0).unwrap(), &grid).unwrap();
    let pl = classify(&Spectrum::power_law(2.0).unwrap(), &grid).unwrap();
    let ex = classify(&Spectrum::exponential().unwrap(), &grid).unwrap();
    let limit = pl.limit_estimate.unwrap_or(f64::NAN);
    let e0 = overfit_coeff(&Spectrum::exponential().unwrap(), 1000, 0.0).unwrap();
    let pass = lp.verdict == Verdict::Benign
        && pl.verdict == Verdict::Tempered
        && (limit - 1.0).abs() <= 0.1
        && ex.verdict == Verdict::Catastrophic
        && e0 > 10.0;
    outcome(
        pass,
        format!(
            "log_power {}, power_law {} (limit {limit:.4}), exponential {}, exponential E0(1000) = {e0:.2}",
            lp.verdict.as_str(),
            pl.verdict.as_str(),
            ex.verdict.as_str()
        ),
    )
}

fn monte_carlo() -> Outcome {
    let iso = McConfig {
        spectrum: Spectrum::isotropic(200).unwrap(),
        target: Target::zero(1.0).unwrap(),
        n: 100,
        deltas: vec![0.0],
        trials: 500,
        seed: 7,
        features: None,
        threads: Some(1),
    };
    let iso_mean = validate(&iso).unwrap().per_delta[0].empirical_mean_risk;
    let iso_gap = (iso_mean - 2.0).abs() / 2.0;

    let spectrum = Spectrum::power_law(2.0).unwrap();
    let target = Target::power_family(2.0, 50, 1.0).unwrap();
    let truncated = Spectrum::explicit(spectrum.materialize(2000)).unwrap();
    let delta_star = tune_ridge(&truncated, &target, 100).unwrap().delta_star;
    let pl = McConfig {
        spectrum,
        target,
        n: 100,
        deltas: vec![0.0, delta_star],
        trials: 500,
        seed: 7,
        features: Some(2000),
        threads: Some(1),
    };
    let report = validate(&pl).unwrap();
    let gaps: Vec<f64> = report.per_delta.iter().map(|d| d.relative_gap).collect();
    let pass = iso_gap < 0.05 && gaps.iter().all(|g| *g < 0.07);
    outcome(
        pass,
        format!(
            "isotropic mean {iso_mean:.4} (gap {iso_gap:.4}); power law gaps {:.4} at 0, {:.4} at delta* = {delta_star:.4}",
            gaps[0], gaps[1]
        ),
    )
}

fn optimistic_rate() -> Outcome {
    let spectra = [
        Spectrum::isotropic(200).unwrap(),
        Spectrum::power_law(2.0).unwrap(),
        Spectrum::log_power(2.0).unwrap(),
        Spectrum::junk(10, 5000).unwrap(),
        Spectrum::explicit(
            (1..=800)
                .map(|i| 1.0 / (i as f64 + 3.0).powf(1.3))
                .collect(),
        )
        .unwrap(),
    ];
    let targets = [
        Target::zero(1.0).unwrap(),
        Target::power_family(2.0, 50, 0.5).unwrap(),
        Target::new(vec![0.0, 0.0, 2.0], 0.0).unwrap(),
    ];
    let n = 100;
    let deltas: Vec<f64> = std::iter::once(0.0)
        .chain((0..19).map(|j| 10f64.powf(-6.0 + 8.0 * j as f64 / 18.0)))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for spec in &spectra {
        for target in &targets {
            for &delta in &deltas {
                for k in [0, 1, 2, 5, 10, 20, 40] {
                    let r = optimistic_gap_check(spec, target, n, delta, k).unwrap();
                    worst = worst.max(r.lhs - r.rhs);
                    count += 1;
                }
            }
        }
    }
    // zero-target isotropic at k = 0 meets the inequality with equality
    let iso = optimistic_gap_check(&spectra[0], &targets[0], n, 0.0, 0).unwrap();
    let equality = close(iso.lhs, iso.rhs, 1e-9);
    outcome(
        worst <= 1e-9 && equality,
        format!(
            "max(lhs - rhs) = {worst:.2e} over {count} checks; isotropic equality lhs {:.12} rhs {:.12}",
            iso.lhs, iso.rhs
        ),
    )
}

fn polynomial_flats() -> Outcome {
    let mut values = Vec::new();
    for (d, threshold) in [(30u64, 1.5), (60u64, 1.2)] {
        let kernel = BlockKernelSpec::geometric(d, 0.5, 3).unwrap();
        let n = (d as f64).powf(1.5).round() as u64;
        let target = PolyTarget::new(vec![0.0, 1.0], 1.0).unwrap();
        let report = poly_regime_report(&kernel, &target, n).unwrap();
        assert_eq!(report.k_signal, d + 1);
        let value = report.e0_upper_at_signal.unwrap_or(f64::INFINITY);
        values.push((d, n, value, threshold));
    }
    let pass = values.iter().all(|(_, _, v, t)| v <= t);
    let detail = values
        .iter()
        .map(|(d, n, v, t)| {
            let floor = (1.0 - (d + 1) as f64 / *n as f64).powi(-2);
            format!("d={d} n={n}: {v:.4} (need <= {t}; (1-k/n)^-2 alone is {floor:.4})")
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn identities() -> Outcome {
    let mut worst_e0 = 0f64;
    let mut worst_norm = 0f64;
    for inst in instances(SUITE_SEED, SUITE_SIZE) {
        let id = ridgeless_identities(&inst.spec, &inst.target, inst.n).unwrap();
        worst_e0 = worst_e0.max(((id.n_over_e0 - id.kappa_weighted) / id.n_over_e0).abs());
        if id.norm_ridgeless > 0.0 {
            worst_norm =
                worst_norm.max(((id.norm_general - id.norm_ridgeless) / id.norm_ridgeless).abs());
        }
    }
    outcome(
        worst_e0 <= 1e-9 && worst_norm <= 1e-9,
        format!("worst relative error {worst_e0:.2e} (n/E0), {worst_norm:.2e} (norm forms)"),
    )
}

fn main() {
    type Runner = Box<dyn Fn() -> Outcome>;
    let criteria: Vec<(u32, &str, f64, Runner)> = vec![
        (1, "isotropic exactness", 1.0, Box::new(isotropic_exactness)),
        (
            2,
            "cost of overfitting within E0",
            60.0,
            Box::new(random_suite),
        ),
        (
            3,
            "effective-rank bounds dominance",
            60.0,
            Box::new(bounds_dominance),
        ),
        (
            4,
            "benign/tempered/catastrophic",
            30.0,
            Box::new(trichotomy),
        ),
        (5, "Monte Carlo agreement", 300.0, Box::new(monte_carlo)),
        (6, "optimistic rate", 10.0, Box::new(optimistic_rate)),
        (
            7,
            "polynomial-regime flats",
            10.0,
            Box::new(polynomial_flats),
        ),
        (8, "internal identities", 60.0, Box::new(identities)),
    ];

    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, limit_s, run) in &criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let timely = within(elapsed, *limit_s);
        let pass = out.pass && timely;
        let time_note = if timely {
            String::new()
        } else {
            format!(" [over {limit_s}s budget]")
        };
        println!(
            "criterion {id} {name}: {} ({:.2}s) {}{time_note}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            out.detail
        );
        passed += usize::from(pass);
        if pass == KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    println!(
        "{passed}/{} criteria pass; known red: {KNOWN_RED:?}",
        criteria.len()
    );
    if !unexpected.is_empty() {
        eprintln!("criteria with unexpected status: {unexpected:?}");
        std::process::exit(1);
    }
}

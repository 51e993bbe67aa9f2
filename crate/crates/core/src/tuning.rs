//! Ridge tuning against the omniscient risk and the cost of overfitting.
//!
//! The search runs over `u = ln κ` rather than over `δ`: every `κ ≥ κ₀`
//! corresponds to exactly one `δ ≥ 0` through the closed-form inverse, so a
//! probe costs one pass over the spectrum and no root finding.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kappa::solve_kappa;
use crate::numeric::golden_section_min;
use crate::risk::{risk_at_ln_kappa, risk_report, RiskReport, Target};
use crate::spectrum::Spectrum;

const MIN_GRID: usize = 200;
const POINTS_PER_DECADE: f64 = 25.0;
/// The grid spans at least this many e-folds above `κ₀` (a factor 10⁸).
const MIN_SPAN: f64 = 18.420_680_743_952_367;
/// And reaches at least this multiple of `λ₁`, where every mode is unlearned.
const TOP_OVER_LAMBDA1: f64 = 1e3;
/// `δ` used to seed the search when the ridgeless problem is degenerate.
const DEGENERATE_SEED_DELTA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuneResult {
    pub n: u64,
    /// Optimal ridge; `+∞` when the zero predictor is optimal.
    pub delta_star: f64,
    pub kappa_star: f64,
    pub ln_kappa_star: f64,
    pub risk_star: f64,
    /// `R̃` at `δ = 0`; `None` when the ridgeless problem is degenerate.
    pub ridgeless_risk: Option<f64>,
    pub e0: Option<f64>,
    /// `R̃(δ=0)/R̃*`.
    pub cost: Option<f64>,
    /// `E₀σ²/R̃*`.
    pub sandwich_lower: Option<f64>,
    /// Number of risk evaluations made.
    pub probes: usize,
}

impl TuneResult {
    pub fn delta_star_is_infinite(&self) -> bool {
        self.delta_star == f64::INFINITY
    }
}

/// Certificates bracketing the cost of overfitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostCertificate {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub tune: TuneResult,
}

/// Minimize `R̃` over `δ ∈ [0, ∞]`.
pub fn tune_ridge(spec: &Spectrum, target: &Target, n: u64) -> Result<TuneResult> {
    let ridgeless = match risk_report(spec, target, n, 0.0) {
        Ok(r) => Some(r),
        Err(Error::DegenerateInterpolation { .. }) => None,
        Err(e) => return Err(e),
    };
    let lo = match &ridgeless {
        Some(r) => r.ln_kappa,
        None => {
            let seed = DEGENERATE_SEED_DELTA * spec.trace().max(f64::MIN_POSITIVE);
            solve_kappa(spec, n, seed)?.ln_kappa
        }
    };
    let ln_lambda1 = spec.ln_eigenvalue(1);
    let hi = (lo + MIN_SPAN).max(ln_lambda1 + TOP_OVER_LAMBDA1.ln());
    let decades = (hi - lo) / std::f64::consts::LN_10;
    let points = MIN_GRID.max((decades * POINTS_PER_DECADE).ceil() as usize);
    let grid: Vec<f64> = (0..points)
        .map(|j| lo + (hi - lo) * j as f64 / (points - 1) as f64)
        .collect();

    let eval = |u: f64| -> Option<RiskReport> { risk_at_ln_kappa(spec, target, n, u).ok() };
    let mut reports: Vec<Option<RiskReport>> = grid.par_iter().map(|&u| eval(u)).collect();
    if let Some(r) = ridgeless {
        reports[0] = Some(r);
    }
    let mut probes = points + 1;
    let infinite = risk_report(spec, target, n, f64::INFINITY)?;

    let risk_of = |r: &Option<RiskReport>| r.map_or(f64::INFINITY, |r| r.test_risk);
    let best_idx = (0..points)
        .min_by(|&a, &b| risk_of(&reports[a]).total_cmp(&risk_of(&reports[b])))
        .unwrap_or(0);
    let mut best = reports[best_idx];

    if let Some(grid_best) = best {
        let a = grid[best_idx.saturating_sub(1)];
        let b = grid[(best_idx + 1).min(points - 1)];
        let mut evals = 0usize;
        let (u, _) = golden_section_min(
            |u| {
                evals += 1;
                risk_of(&eval(u))
            },
            a,
            b,
            1e-10 * (1.0 + a.abs().max(b.abs())),
            200,
        );
        probes += evals;
        if let Some(r) = eval(u) {
            if r.test_risk < grid_best.test_risk {
                best = Some(r);
            }
        }
    }

    let star = match best {
        Some(r) if r.test_risk <= infinite.test_risk => r,
        _ => infinite,
    };
    let (ridgeless_risk, e0) = match ridgeless {
        Some(r) => (Some(r.test_risk), Some(r.e_delta)),
        None => (None, None),
    };
    let cost = ridgeless_risk.map(|r0| ratio(r0, star.test_risk));
    let sandwich_lower = e0.map(|e| ratio(e * target.sigma2(), star.test_risk));
    Ok(TuneResult {
        n,
        delta_star: star.delta,
        kappa_star: star.kappa,
        ln_kappa_star: star.ln_kappa,
        risk_star: star.test_risk,
        ridgeless_risk,
        e0,
        cost,
        sandwich_lower,
        probes,
    })
}

/// `0/0` is read as a perfect ratio of 1.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Cost of overfitting with its lower and upper certificates.
pub fn cost_of_overfitting(spec: &Spectrum, target: &Target, n: u64) -> Result<CostCertificate> {
    let tune = tune_ridge(spec, target, n)?;
    match (tune.cost, tune.e0, tune.sandwich_lower) {
        (Some(cost), Some(upper), Some(lower)) => Ok(CostCertificate {
            cost,
            lower,
            upper,
            tune,
        }),
        _ => Err(Error::DegenerateInterpolation {
            positive: spec.positive_count().unwrap_or(0),
            n,
        }),
    }
}

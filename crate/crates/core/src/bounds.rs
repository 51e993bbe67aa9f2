//! Effective-rank bounds on the overfitting coefficient, the benign
//! condition, the benign/tempered/catastrophic classification and the
//! optimistic-rate and norm bounds.
//!
//! Upper bounds on `E₀` are reported as `Option<f64>`, with `None` for a
//! vacuous bound. Lower bounds are stated on `Σ L_i²/n` and converted to `E₀`
//! through `E₀ = (1 − Σ L_i²/n)⁻¹`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::risk::{overfit_coeff, risk_report, Target};
use crate::spectrum::{EffectiveRanks, Spectrum};

/// Largest window scanned exhaustively by [`tempered_bound`].
const WINDOW_CAP: u64 = 1_000_000;
/// Above this `n`, k-scans use a geometric subgrid.
const FULL_SCAN_CAP: u64 = 1 << 17;
const DRIFT_THRESHOLD: f64 = 0.1;
const HOLD_TOL: f64 = 1e-9;

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(())
}

fn need_k_below_n(k: u64, n: u64) -> Result<()> {
    check_n(n)?;
    if k >= n {
        return Err(Error::InvalidArgument(format!(
            "need k < n, got k = {k}, n = {n}"
        )));
    }
    Ok(())
}

/// `(1 − k/n)⁻² (1 − n/R_k)₊⁻¹`, `None` when `R_k ≤ n`.
pub fn e0_upper_big_rank(spec: &Spectrum, n: u64, k: u64) -> Result<Option<f64>> {
    need_k_below_n(k, n)?;
    let er = spec.effective_ranks(k)?;
    let nf = n as f64;
    if er.degenerate || er.r_big <= nf {
        return Ok(None);
    }
    let a = 1.0 - k as f64 / nf;
    Ok(Some(1.0 / (a * a * (1.0 - nf / er.r_big))))
}

/// `(1 − k/n)⁻¹ (1 − n/(k + r_k))₊⁻¹`, `None` when `k + r_k ≤ n`.
pub fn e0_upper_small_rank(spec: &Spectrum, n: u64, k: u64) -> Result<Option<f64>> {
    need_k_below_n(k, n)?;
    let er = spec.effective_ranks(k)?;
    let nf = n as f64;
    let m = k as f64 + er.r_small;
    if er.degenerate || m <= nf {
        return Ok(None);
    }
    Ok(Some(1.0 / ((1.0 - k as f64 / nf) * (1.0 - nf / m))))
}

/// Convert a lower bound on `Σ L_i²/n` into one on `E₀`.
pub fn e0_from_sum_l2_lower(x: f64) -> f64 {
    if x >= 1.0 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - x.max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub b: f64,
    /// Selected index; `n` when no `k < n` qualifies.
    pub k: u64,
    /// Lower bound on `Σ L_i²/n`.
    pub sum_l2_over_n: f64,
    /// Implied lower bound on `E₀`.
    pub e0: f64,
}

/// Lower bound from the first `k < n` with `n ≤ k + b r_k`.
pub fn e0_lower(spec: &Spectrum, n: u64, b: f64) -> Result<LowerBound> {
    check_n(n)?;
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "b must be positive, got {b}"
        )));
    }
    let nf = n as f64;
    let mut chosen = n;
    for k in 0..n {
        let er = spec.effective_ranks(k)?;
        if nf <= k as f64 + b * er.r_small {
            chosen = k;
            break;
        }
    }
    let er = spec.effective_ranks(chosen)?;
    let kf = chosen as f64;
    let lead = 1.0 - kf / nf;
    let first = if lead == 0.0 {
        0.0
    } else if er.degenerate {
        f64::INFINITY
    } else {
        lead * lead * nf / er.r_big / ((b + 1.0) * (b + 1.0))
    };
    let second = (b / (b + 1.0)).powi(2) * kf / nf;
    let x = first.max(second);
    Ok(LowerBound {
        b,
        k: chosen,
        sum_l2_over_n: x,
        e0: e0_from_sum_l2_lower(x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperedBound {
    pub epsilon: f64,
    pub k_l: u64,
    /// `None` when no index reaches `k + r_k ≥ (1 + 1/ε) n` (finite spectra).
    pub k_u: Option<u64>,
    /// Upper bound on `E₀`; `+∞` when vacuous.
    pub value: f64,
    /// Index attaining the maximum.
    pub argmax: Option<u64>,
    /// Set when some `r_k ≤ 1` inside the window.
    pub rank_degenerate: bool,
    /// Set when the window exceeded the scan cap and was subsampled.
    pub subsampled: bool,
}

/// Window bound for tempered spectra, `0 < ε < n/r₀`.
pub fn tempered_bound(spec: &Spectrum, n: u64, epsilon: f64) -> Result<TemperedBound> {
    check_n(n)?;
    let nf = n as f64;
    let r0 = spec.effective_ranks(0)?.r_small;
    let max = nf / r0;
    if !(epsilon > 0.0 && epsilon < max) {
        return Err(Error::EpsilonOutOfRange { epsilon, max });
    }
    let ranks = |k: u64| spec.effective_ranks(k);

    // k + ε r_k ≤ n forces k ≤ n
    let mut k_l = 0;
    for k in 0..=n {
        let er = ranks(k)?;
        if k as f64 + epsilon * er.r_small <= nf {
            k_l = k;
        }
    }
    let target = (1.0 + 1.0 / epsilon) * nf;
    let limit = target.ceil() as u64;
    let mut k_u = None;
    for k in 0..=limit {
        let er = ranks(k)?;
        if k as f64 + er.r_small >= target {
            k_u = Some(k);
            break;
        }
        if er.degenerate {
            break;
        }
    }
    let mut out = TemperedBound {
        epsilon,
        k_l,
        k_u,
        value: f64::INFINITY,
        argmax: None,
        rank_degenerate: false,
        subsampled: false,
    };
    let Some(k_u) = k_u else { return Ok(out) };
    if k_u <= k_l {
        return Ok(out);
    }
    let ks: Vec<u64> = if k_u - k_l <= WINDOW_CAP {
        (k_l..k_u).collect()
    } else {
        out.subsampled = true;
        // contiguous near k_l, geometric towards k_u
        let mut v: Vec<u64> = (k_l..k_l + WINDOW_CAP / 2).collect();
        let mut x = (k_l + WINDOW_CAP / 2) as f64;
        while (x as u64) < k_u {
            v.push(x as u64);
            x *= 1.0 + 1e-4;
        }
        v.push(k_u - 1);
        v.dedup();
        v
    };
    let terms: Vec<Result<(u64, f64, bool)>> = ks
        .par_iter()
        .map(|&k| {
            let er = ranks(k)?;
            if er.r_small <= 1.0 {
                return Ok((k, f64::INFINITY, true));
            }
            let ratio = (spec.ln_eigenvalue(k + 1) - spec.ln_eigenvalue(k + 2)).exp();
            let t = ratio + (k as f64 + 1.0) / (epsilon * (er.r_small - 1.0));
            Ok((k, t, false))
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for t in terms {
        let (k, v, deg) = t?;
        out.rank_degenerate |= deg;
        if v > best || v.is_nan() {
            best = v;
            out.argmax = Some(k);
        }
    }
    out.value = (1.0 + epsilon).powi(2) * best;
    Ok(out)
}

/// `(n/k)((k − n)/(k − n + r_k))²`, a lower bound on `Σ L_i²/n` for `k ≥ n`.
pub fn catastrophic_bound(spec: &Spectrum, n: u64, k: u64) -> Result<f64> {
    check_n(n)?;
    if k < n {
        return Err(Error::InvalidArgument(format!(
            "need k ≥ n, got k = {k}, n = {n}"
        )));
    }
    if k == n {
        return Ok(0.0);
    }
    let er = spec.effective_ranks(k)?;
    let gap = (k - n) as f64;
    Ok(n as f64 / k as f64 * (gap / (gap + er.r_small)).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenignCondition {
    /// First `k < n` with `n ≤ k + r_k`, or `n` when there is none.
    pub k_n: u64,
    pub found: bool,
    pub k_over_n: f64,
    pub n_over_big_rank: f64,
}

pub fn benign_condition(spec: &Spectrum, n: u64) -> Result<BenignCondition> {
    check_n(n)?;
    let nf = n as f64;
    let mut k_n = n;
    for k in 0..n {
        let er = spec.effective_ranks(k)?;
        if nf <= k as f64 + er.r_small {
            k_n = k;
            break;
        }
    }
    let er = spec.effective_ranks(k_n)?;
    Ok(BenignCondition {
        k_n,
        found: k_n < n,
        k_over_n: k_n as f64 / nf,
        n_over_big_rank: if er.degenerate {
            f64::INFINITY
        } else {
            nf / er.r_big
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Tempered,
    Catastrophic,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Benign => "benign",
            Verdict::Tempered => "tempered",
            Verdict::Catastrophic => "catastrophic",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomyVerdict {
    pub verdict: Verdict,
    /// `(k, k/r_k)` along the grid.
    pub evidence: Vec<(u64, f64)>,
    pub limit_estimate: Option<f64>,
    /// Signed relative change of `k/r_k` over the last decade of the grid.
    pub drift: Option<f64>,
}

/// `2⁴, 2⁵, …, 2²⁰`.
pub fn default_k_grid() -> Vec<u64> {
    (4..=20).map(|j| 1u64 << j).collect()
}

/// Classify the large-`k` behaviour of `k/r_k`.
pub fn classify(spec: &Spectrum, k_grid: &[u64]) -> Result<TaxonomyVerdict> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let inconclusive = |evidence, drift| TaxonomyVerdict {
        verdict: Verdict::Inconclusive,
        evidence,
        limit_estimate: None,
        drift,
    };
    if !spec.is_infinite() || grid.len() < 2 {
        return Ok(inconclusive(Vec::new(), None));
    }
    let evidence: Vec<(u64, f64)> = grid
        .iter()
        .map(|&k| Ok((k, k as f64 / spec.effective_ranks(k)?.r_small)))
        .collect::<Result<_>>()?;
    let k_max = *grid.last().unwrap();
    let start = evidence
        .iter()
        .position(|(k, _)| *k as f64 >= k_max as f64 / 10.0)
        .unwrap_or(0)
        .min(evidence.len() - 2);
    let tail = &evidence[start..];
    let first = tail[0].1;
    let last = tail[tail.len() - 1].1;
    if !(first.is_finite() && last.is_finite() && last > 0.0) {
        return Ok(inconclusive(evidence, None));
    }
    let drift = (last - first) / last;
    let increasing = tail.windows(2).all(|w| w[1].1 > w[0].1);
    let decreasing = tail.windows(2).all(|w| w[1].1 < w[0].1);
    let (verdict, limit) = if drift.abs() < DRIFT_THRESHOLD {
        (Verdict::Tempered, Some(last))
    } else if increasing {
        (Verdict::Catastrophic, Some(f64::INFINITY))
    } else if decreasing {
        (Verdict::Benign, Some(0.0))
    } else {
        (Verdict::Inconclusive, None)
    };
    Ok(TaxonomyVerdict {
        verdict,
        evidence,
        limit_estimate: limit,
        drift: Some(drift),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimisticRate {
    pub k: u64,
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `(1 − ε)√R̃ − √R̂ ≤ √(S1(k)‖f̂‖²/n)` with `ε = √((k² + 2kn)/n²)`.
pub fn optimistic_gap_check(
    spec: &Spectrum,
    target: &Target,
    n: u64,
    delta: f64,
    k: u64,
) -> Result<OptimisticRate> {
    let rep = risk_report(spec, target, n, delta)?;
    let nf = n as f64;
    let kf = k as f64;
    let epsilon = ((kf * kf + 2.0 * kf * nf) / (nf * nf)).sqrt();
    let lhs = (1.0 - epsilon) * rep.test_risk.sqrt() - rep.train_risk.sqrt();
    let s1 = spec.tail_sums(k)?.s1;
    let rhs = if s1 == 0.0 {
        0.0
    } else {
        (s1 * rep.hilbert_norm_sq / nf).sqrt()
    };
    Ok(OptimisticRate {
        k,
        epsilon,
        lhs,
        rhs,
        holds: lhs <= rhs + HOLD_TOL,
    })
}

/// `Σ_{i≤l} v_i²/λ_i` and `Σ_{i>l} v_i²`; `l = None` means `l = ∞`.
fn split_target(spec: &Spectrum, target: &Target, l: Option<u64>) -> (f64, f64) {
    let mut head = CompensatedSum::new();
    let mut rest = CompensatedSum::new();
    for (i, &v) in target.coeffs().iter().enumerate() {
        let idx = i as u64 + 1;
        if v == 0.0 {
            continue;
        }
        if l.is_none_or(|l| idx <= l) {
            let ln_lambda = spec.ln_eigenvalue(idx);
            head.add(v * v * (-ln_lambda).exp());
        } else {
            rest.add(v * v);
        }
    }
    (head.value(), rest.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBound {
    pub k: u64,
    pub l: Option<u64>,
    pub hypothesis_held: bool,
    /// `+∞` when the hypothesis fails.
    pub value: f64,
}

/// Bound on `‖f̂₀‖²` valid when `R_k > n`.
pub fn ridgeless_norm_bound(
    spec: &Spectrum,
    target: &Target,
    n: u64,
    l: Option<u64>,
    k: u64,
) -> Result<NormBound> {
    check_n(n)?;
    let ts = spec.tail_sums(k)?;
    let er = spec.effective_ranks(k)?;
    let nf = n as f64;
    if er.degenerate || er.r_big <= nf {
        return Ok(NormBound {
            k,
            l,
            hypothesis_held: false,
            value: f64::INFINITY,
        });
    }
    let (head, rest) = split_target(spec, target, l);
    let value = head + nf * (target.sigma2() + rest) / (ts.s1 * (1.0 - nf / er.r_big));
    Ok(NormBound {
        k,
        l,
        hypothesis_held: true,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskUpperBound {
    pub k: u64,
    pub l: Option<u64>,
    pub epsilon: f64,
    pub hypothesis_held: bool,
    /// Upper bound on `(1 − ε)² R̃(δ=0)`; `+∞` when the hypothesis fails.
    pub value: f64,
}

/// Risk bound valid when `(k/n)² + 2k/n < 1` and `R_k > n`.
pub fn risk_upper_bound(
    spec: &Spectrum,
    target: &Target,
    n: u64,
    k: u64,
    l: Option<u64>,
) -> Result<RiskUpperBound> {
    check_n(n)?;
    let nf = n as f64;
    let t = k as f64 / nf;
    let epsilon = (t * t + 2.0 * t).sqrt();
    let er = spec.effective_ranks(k)?;
    let mut out = RiskUpperBound {
        k,
        l,
        epsilon,
        hypothesis_held: false,
        value: f64::INFINITY,
    };
    if epsilon >= 1.0 || er.degenerate || er.r_big <= nf {
        return Ok(out);
    }
    let s1 = spec.tail_sums(k)?.s1;
    let (head, rest) = split_target(spec, target, l);
    out.hypothesis_held = true;
    out.value = s1 * head / nf + (target.sigma2() + rest) / (1.0 - nf / er.r_big);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
}

/// One bound on `E₀` with the parameter choice that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub name: String,
    pub kind: BoundKind,
    pub k: Option<u64>,
    pub window: Option<(u64, u64)>,
    pub b: Option<f64>,
    pub epsilon: Option<f64>,
    pub hypothesis_held: bool,
    /// Bound on `E₀`; `None` when vacuous.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub n: u64,
    /// `None` when the ridgeless problem is degenerate.
    pub e0_actual: Option<f64>,
    pub benign: BenignCondition,
    pub entries: Vec<BoundEntry>,
}

impl BoundsReport {
    pub fn best(&self, name: &str) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Indices `0..n`, or a geometric subgrid of them when `n` is large.
fn k_scan(n: u64) -> Vec<u64> {
    if n <= FULL_SCAN_CAP {
        return (0..n).collect();
    }
    let mut ks: Vec<u64> = (0..1024).collect();
    let mut x = 1024f64;
    while (x as u64) < n {
        ks.push(x as u64);
        x *= 1.01;
    }
    ks.push(n - 1);
    ks.dedup();
    ks
}

/// Smallest value of a k-indexed upper bound over the scan grid.
fn best_over_k<F>(n: u64, f: F) -> Result<Option<(u64, f64)>>
where
    F: Fn(u64) -> Result<Option<f64>> + Sync,
{
    let vals: Vec<Result<Option<f64>>> = k_scan(n).par_iter().map(|&k| f(k)).collect();
    let mut best: Option<(u64, f64)> = None;
    for (k, v) in k_scan(n).into_iter().zip(vals) {
        if let Some(v) = v? {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((k, v));
            }
        }
    }
    Ok(best)
}

/// Best `(k, value)` of the `R_k` upper bound over `k < n`.
pub fn best_upper_big_rank(spec: &Spectrum, n: u64) -> Result<Option<(u64, f64)>> {
    best_over_k(n, |k| e0_upper_big_rank(spec, n, k))
}

/// Best `(k, value)` of the `r_k` upper bound over `k < n`.
pub fn best_upper_small_rank(spec: &Spectrum, n: u64) -> Result<Option<(u64, f64)>> {
    best_over_k(n, |k| e0_upper_small_rank(spec, n, k))
}

fn upper_entry(name: &str, best: Option<(u64, f64)>) -> BoundEntry {
    BoundEntry {
        name: name.into(),
        kind: BoundKind::Upper,
        k: best.map(|b| b.0),
        window: None,
        b: None,
        epsilon: None,
        hypothesis_held: best.is_some(),
        value: best.map(|b| b.1),
    }
}

/// Every bound at its best parameter choice, alongside the solver's `E₀`.
pub fn bounds_report(spec: &Spectrum, n: u64) -> Result<BoundsReport> {
    check_n(n)?;
    let e0_actual = match overfit_coeff(spec, n, 0.0) {
        Ok(e) => Some(e),
        Err(Error::DegenerateInterpolation { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut entries = vec![
        upper_entry("upper_big_rank", best_upper_big_rank(spec, n)?),
        upper_entry("upper_small_rank", best_upper_small_rank(spec, n)?),
    ];

    let r0 = spec.effective_ranks(0)?.r_small;
    let eps_max = n as f64 / r0;
    let mut best_tempered: Option<TemperedBound> = None;
    for eps in [0.1, 0.25, 0.5, 1.0, 2.0] {
        if eps < eps_max {
            let t = tempered_bound(spec, n, eps)?;
            if best_tempered.is_none_or(|b| t.value < b.value) {
                best_tempered = Some(t);
            }
        }
    }
    entries.push(match best_tempered {
        Some(t) => BoundEntry {
            name: "upper_tempered".into(),
            kind: BoundKind::Upper,
            k: t.argmax,
            window: t.k_u.map(|u| (t.k_l, u)),
            b: None,
            epsilon: Some(t.epsilon),
            hypothesis_held: t.value.is_finite(),
            value: t.value.is_finite().then_some(t.value),
        },
        None => BoundEntry {
            name: "upper_tempered".into(),
            kind: BoundKind::Upper,
            k: None,
            window: None,
            b: None,
            epsilon: None,
            hypothesis_held: false,
            value: None,
        },
    });

    let mut best_lower: Option<LowerBound> = None;
    for b in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let lb = e0_lower(spec, n, b)?;
        if best_lower.is_none_or(|x| lb.e0 > x.e0) {
            best_lower = Some(lb);
        }
    }
    let lb = best_lower.expect("non-empty b grid");
    entries.push(BoundEntry {
        name: "lower_selection".into(),
        kind: BoundKind::Lower,
        k: Some(lb.k),
        window: None,
        b: Some(lb.b),
        epsilon: None,
        hypothesis_held: true,
        value: Some(lb.e0),
    });

    // k = n(1 + f) for f geometric in [1/64, 16]
    let mut best_cat: Option<(u64, f64)> = None;
    let mut f = 1.0 / 64.0;
    while f <= 16.0 {
        let k = ((n as f64) * (1.0 + f)).ceil() as u64;
        let x = catastrophic_bound(spec, n, k.max(n + 1))?;
        if best_cat.is_none_or(|(_, b)| x > b) {
            best_cat = Some((k.max(n + 1), x));
        }
        f *= 1.25;
    }
    let (k, x) = best_cat.expect("non-empty k grid");
    entries.push(BoundEntry {
        name: "lower_catastrophic".into(),
        kind: BoundKind::Lower,
        k: Some(k),
        window: None,
        b: None,
        epsilon: None,
        hypothesis_held: true,
        value: Some(e0_from_sum_l2_lower(x)),
    });

    Ok(BoundsReport {
        n,
        e0_actual,
        benign: benign_condition(spec, n)?,
        entries,
    })
}

/// Convenience: effective ranks at each `k` of a grid.
pub fn rank_profile(spec: &Spectrum, ks: &[u64]) -> Result<Vec<EffectiveRanks>> {
    ks.iter().map(|&k| spec.effective_ranks(k)).collect()
}

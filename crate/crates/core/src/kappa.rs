//! Effective regularization: the root `κ` of
//!
//! ```text
//! Σ λ_i/(λ_i + κ) + δ/κ = n
//! ```
//!
//! The solver works on `u = ln κ` so that spectra whose `κ` underflows `f64`
//! (the exponential family at large `n`) are still handled. Callers that need
//! the exact scale should read [`KappaSolution::ln_kappa`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::ln_add_exp;
use crate::spectrum::{ModeSums, Spectrum, SERIES_RATIO};

const MAX_ITER: usize = 200;
const RESIDUAL_TOL: f64 = 1e-10;
/// Relative to `max(1, |u|)`; Newton is polished to near round-off since
/// the inverse map `δ(κ)` amplifies errors in `κ` when `δ` is small.
const STEP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaSolution {
    pub kappa: f64,
    pub ln_kappa: f64,
    pub delta: f64,
    pub n: u64,
    /// `Σ λ_i/(λ_i+κ) + δ/κ − n` at the returned root.
    pub residual: f64,
    /// Final bracket on `κ`.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// The three analytic estimates of `κ₀` at a given `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaBrackets {
    pub k: u64,
    /// `(1 − n/R_k)·S1(k)/n`, clamped at 0.
    pub lower_big: f64,
    /// `λ_{k+1}((k + r_k)/n − 1)`, clamped at 0.
    pub lower_small: f64,
    /// `(1 − k/n)⁻¹·S1(k)/n`; `+∞` when `k ≥ n`.
    pub upper: f64,
}

/// Log-space versions of the bracket values; `-∞` marks a vacuous bound.
#[derive(Debug, Clone, Copy)]
struct LnBrackets {
    lower: f64,
    upper: f64,
}

fn ln_brackets(spec: &Spectrum, n: u64, k: u64) -> Result<LnBrackets> {
    let ts = spec.tail_sums(k)?;
    let nf = n as f64;
    if ts.is_degenerate() {
        return Ok(LnBrackets {
            lower: f64::NEG_INFINITY,
            upper: if k < n {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
        });
    }
    let ln_s1 = ts.ln_s1();
    let r_big = ts.r * ts.r / ts.q;
    let lower_big = if r_big > nf {
        (-nf / r_big).ln_1p() + ln_s1 - nf.ln()
    } else {
        f64::NEG_INFINITY
    };
    let factor = (k as f64 + ts.r) / nf - 1.0;
    let lower_small = if factor > 0.0 {
        ts.ln_lead + factor.ln()
    } else {
        f64::NEG_INFINITY
    };
    let upper = if k < n {
        ln_s1 - (nf - k as f64).ln()
    } else {
        f64::INFINITY
    };
    Ok(LnBrackets {
        lower: lower_big.max(lower_small),
        upper,
    })
}

/// Brackets on the ridgeless `κ₀` at index `k`.
pub fn kappa_brackets(spec: &Spectrum, n: u64, k: u64) -> Result<KappaBrackets> {
    check_n(n)?;
    let ts = spec.tail_sums(k)?;
    let nf = n as f64;
    if ts.is_degenerate() {
        return Ok(KappaBrackets {
            k,
            lower_big: 0.0,
            lower_small: 0.0,
            upper: if k < n { 0.0 } else { f64::INFINITY },
        });
    }
    let r_big = ts.r * ts.r / ts.q;
    Ok(KappaBrackets {
        k,
        lower_big: ((1.0 - nf / r_big) * ts.s1 / nf).max(0.0),
        lower_small: (ts.lead * ((k as f64 + ts.r) / nf - 1.0)).max(0.0),
        upper: if k < n {
            ts.s1 / (nf - k as f64)
        } else {
            f64::INFINITY
        },
    })
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(())
}

/// `F(u) = Σ L_i + δ e^{-u} − n` and `−dF/du`.
fn objective(spec: &Spectrum, n: f64, delta: f64, u: f64) -> (f64, f64, ModeSums) {
    let m = spec.mode_sums(u);
    let reg = if delta > 0.0 {
        (delta.ln() - u).exp()
    } else {
        0.0
    };
    (m.sum_l + reg - n, m.sum_lq + reg, m)
}

/// Solve for `κ_δ`. `δ = +∞` yields `κ = +∞`.
pub fn solve_kappa(spec: &Spectrum, n: u64, delta: f64) -> Result<KappaSolution> {
    check_n(n)?;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "delta must be non-negative, got {delta}"
        )));
    }
    if delta == f64::INFINITY {
        return Ok(KappaSolution {
            kappa: f64::INFINITY,
            ln_kappa: f64::INFINITY,
            delta,
            n,
            residual: 0.0,
            bracket: (f64::INFINITY, f64::INFINITY),
            iterations: 0,
        });
    }
    if delta == 0.0 && !spec.exceeds(n) {
        return Err(Error::DegenerateInterpolation {
            positive: spec.positive_count().unwrap_or(0),
            n,
        });
    }
    let nf = n as f64;
    let (mut lo, mut hi) = initial_bracket(spec, n, delta)?;

    // widen until the signs are right; guards against round-off at the ends
    let mut f_lo = objective(spec, nf, delta, lo).0;
    let mut guard = 0;
    while f_lo < 0.0 {
        lo -= std::f64::consts::LN_2 * (1 << guard.min(10)) as f64;
        f_lo = objective(spec, nf, delta, lo).0;
        guard += 1;
        if guard > 100 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: f_lo,
            });
        }
    }
    let mut f_hi = objective(spec, nf, delta, hi).0;
    guard = 0;
    while f_hi > 0.0 {
        hi += std::f64::consts::LN_2 * (1 << guard.min(10)) as f64;
        f_hi = objective(spec, nf, delta, hi).0;
        guard += 1;
        if guard > 100 {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: f_hi,
            });
        }
    }

    let tol = RESIDUAL_TOL * nf;
    let mut u = if f_lo == 0.0 {
        lo
    } else if f_hi == 0.0 {
        hi
    } else {
        0.5 * (lo + hi)
    };
    let mut iterations = 0;
    let mut last = objective(spec, nf, delta, u);
    loop {
        let (f, slope, _) = last;
        if f == 0.0 {
            lo = u;
            hi = u;
            break;
        }
        if f > 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if iterations >= MAX_ITER {
            break;
        }
        iterations += 1;
        let newton = u + f / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - u).abs();
        u = next;
        last = objective(spec, nf, delta, u);
        let width = hi - lo;
        let scale = u.abs().max(1.0);
        if last.0.abs() <= tol && (step <= STEP_TOL * scale || width <= STEP_TOL * scale) {
            break;
        }
        if width <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            break;
        }
    }
    let (residual, _, sums) = last;
    if sums.tail_ratio > SERIES_RATIO {
        return Err(Error::Truncation(format!(
            "κ = e^{u:.3} is too small relative to the spectrum horizon; raise the horizon"
        )));
    }
    if residual.is_nan() || residual.abs() > tol {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    let lo = lo.min(u);
    let hi = hi.max(u);
    Ok(KappaSolution {
        kappa: u.exp(),
        ln_kappa: u,
        delta,
        n,
        residual,
        bracket: (lo.exp(), hi.exp()),
        iterations,
    })
}

fn initial_bracket(spec: &Spectrum, n: u64, delta: f64) -> Result<(f64, f64)> {
    let nf = n as f64;
    // the lower brackets stay valid for δ > 0 because κ_δ ≥ κ₀
    let mut ks: Vec<u64> = vec![0];
    let mut p = 1u64;
    while p < 2 * n {
        ks.push(p);
        p *= 2;
    }
    ks.extend([n - 1, n, 2 * n]);
    ks.sort_unstable();
    ks.dedup();
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for &k in &ks {
        // beyond-horizon tails may miss the tolerance; such k just give no bound
        if let Ok(b) = ln_brackets(spec, n, k) {
            lower = lower.max(b.lower);
            if delta == 0.0 {
                upper = upper.min(b.upper);
            }
        }
    }
    if delta > 0.0 {
        lower = lower.max(delta.ln() - nf.ln());
        let ln_trace = spec.tail_sums(0)?.ln_s1();
        upper = ln_add_exp(ln_trace, delta.ln()) + std::f64::consts::LN_2 - nf.ln();
    }
    if !lower.is_finite() {
        lower = upper - 10.0;
    }
    if !upper.is_finite() || upper <= lower {
        upper = lower + 10.0;
    }
    Ok((lower, upper))
}

/// `δ = κ(n − Σ λ_i/(λ_i+κ))`, the inverse map.
pub fn delta_from_kappa(spec: &Spectrum, n: u64, kappa: f64) -> Result<f64> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    delta_from_ln_kappa(spec, n, kappa.ln())
}

/// [`delta_from_kappa`] with `κ` given by its logarithm.
pub fn delta_from_ln_kappa(spec: &Spectrum, n: u64, ln_kappa: f64) -> Result<f64> {
    check_n(n)?;
    if ln_kappa == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let nf = n as f64;
    let m = spec.mode_sums(ln_kappa);
    let gap = nf - m.sum_l;
    if gap < -RESIDUAL_TOL * nf {
        let kappa0 = match solve_kappa(spec, n, 0.0) {
            Ok(s) => s.kappa,
            Err(_) => 0.0,
        };
        return Err(Error::NegativeDelta {
            kappa: ln_kappa.exp(),
            kappa0,
        });
    }
    Ok(ln_kappa.exp() * gap.max(0.0))
}

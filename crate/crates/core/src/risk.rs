//! Learnabilities, the overfitting coefficient and the omniscient estimates
//! of test risk, training error and Hilbert norm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kappa::{delta_from_ln_kappa, solve_kappa, KappaSolution};
use crate::numeric::CompensatedSum;
use crate::spectrum::Spectrum;

/// Eigencoefficients `v_i` of the target (zero past the list) and noise `σ²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Target {
    coeffs: Vec<f64>,
    sigma2: f64,
}

impl Target {
    pub fn new(coeffs: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidTarget(format!(
                "sigma2 must be finite and non-negative, got {sigma2}"
            )));
        }
        if let Some(v) = coeffs.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidTarget(format!(
                "coefficients must be finite, got {v}"
            )));
        }
        Ok(Self { coeffs, sigma2 })
    }

    /// Pure noise.
    pub fn zero(sigma2: f64) -> Result<Self> {
        Self::new(Vec::new(), sigma2)
    }

    /// `v_i = i^{-power/2}` for `i ≤ count`, so that `v_i² = i^{-power}`.
    pub fn power_family(power: f64, count: usize, sigma2: f64) -> Result<Self> {
        if !power.is_finite() {
            return Err(Error::InvalidTarget(format!(
                "power must be finite, got {power}"
            )));
        }
        let coeffs = (1..=count).map(|i| (i as f64).powf(-power / 2.0)).collect();
        Self::new(coeffs, sigma2)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `Σ v_i²`.
    pub fn energy(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|v| v * v)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Index of the last non-zero coefficient (1-based), 0 if none.
    pub fn support(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|v| *v != 0.0)
            .map_or(0, |i| i + 1)
    }

    fn check_against(&self, spec: &Spectrum) -> Result<()> {
        if let Some(horizon) = spec.prefix_len() {
            let support = self.support();
            if support > horizon {
                return Err(Error::TargetBeyondHorizon {
                    index: support,
                    horizon,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub n: u64,
    pub delta: f64,
    pub kappa: f64,
    pub ln_kappa: f64,
    pub e_delta: f64,
    pub test_risk: f64,
    pub train_risk: f64,
    pub hilbert_norm_sq: f64,
    pub sum_l: f64,
    pub sum_l2: f64,
}

/// `(Σ L_i, Σ L_i²)` with `L_i = λ_i/(λ_i+κ)`.
pub fn learnability_sums(spec: &Spectrum, kappa: f64) -> Result<(f64, f64)> {
    if kappa.is_nan() || kappa <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let m = spec.mode_sums(kappa.ln());
    Ok((m.sum_l, m.sum_l2))
}

/// `E_δ = n/(n − Σ L_i²)`.
pub fn overfit_coeff(spec: &Spectrum, n: u64, delta: f64) -> Result<f64> {
    let sol = solve_kappa(spec, n, delta)?;
    Ok(report_at(spec, &Target::zero(0.0)?, &sol)?.e_delta)
}

/// `R̃ = E_δ (Σ (1−L_i)² v_i² + σ²)`.
pub fn omniscient_risk(spec: &Spectrum, target: &Target, n: u64, delta: f64) -> Result<f64> {
    Ok(risk_report(spec, target, n, delta)?.test_risk)
}

/// `R̂ = (δ/(nκ))² R̃`.
pub fn train_error_estimate(spec: &Spectrum, target: &Target, n: u64, delta: f64) -> Result<f64> {
    Ok(risk_report(spec, target, n, delta)?.train_risk)
}

/// `Σ λ_i v_i²/(λ_i+κ)² + (R̃/n) Σ λ_i/(λ_i+κ)²`.
pub fn hilbert_norm_estimate(spec: &Spectrum, target: &Target, n: u64, delta: f64) -> Result<f64> {
    Ok(risk_report(spec, target, n, delta)?.hilbert_norm_sq)
}

/// Full set of estimates at ridge `delta`.
pub fn risk_report(spec: &Spectrum, target: &Target, n: u64, delta: f64) -> Result<RiskReport> {
    target.check_against(spec)?;
    let sol = solve_kappa(spec, n, delta)?;
    report_at(spec, target, &sol)
}

/// Estimates at a given `κ`, recovering `δ` through the inverse map.
///
/// This skips root finding and is what the ridge tuner probes.
pub fn risk_at_ln_kappa(
    spec: &Spectrum,
    target: &Target,
    n: u64,
    ln_kappa: f64,
) -> Result<RiskReport> {
    target.check_against(spec)?;
    let delta = delta_from_ln_kappa(spec, n, ln_kappa)?;
    let sol = KappaSolution {
        kappa: ln_kappa.exp(),
        ln_kappa,
        delta,
        n,
        residual: 0.0,
        bracket: (ln_kappa.exp(), ln_kappa.exp()),
        iterations: 0,
    };
    report_at(spec, target, &sol)
}

fn report_at(spec: &Spectrum, target: &Target, sol: &KappaSolution) -> Result<RiskReport> {
    let n = sol.n;
    let nf = n as f64;
    let u = sol.ln_kappa;
    if u == f64::INFINITY {
        let r = target.sigma2 + target.energy();
        return Ok(RiskReport {
            n,
            delta: sol.delta,
            kappa: f64::INFINITY,
            ln_kappa: u,
            e_delta: 1.0,
            test_risk: r,
            train_risk: r,
            hilbert_norm_sq: 0.0,
            sum_l: 0.0,
            sum_l2: 0.0,
        });
    }
    let m = spec.mode_sums(u);
    let gap = nf - m.sum_l2;
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::DegenerateInterpolation {
            positive: spec.positive_count().unwrap_or(0),
            n,
        });
    }
    let e_delta = nf / gap;

    let mut bias = CompensatedSum::new();
    let mut fit = CompensatedSum::new();
    for (i, &v) in target.coeffs.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let ln_lambda = spec.ln_eigenvalue(i as u64 + 1);
        if ln_lambda == f64::NEG_INFINITY {
            bias.add(v * v);
            continue;
        }
        // ρ = κ/λ; 1 − L = ρ/(1+ρ), λ/(λ+κ)² = L²/λ
        let rho = (u - ln_lambda).exp();
        let one_minus_l = rho / (1.0 + rho);
        let l = 1.0 / (1.0 + rho);
        bias.add(one_minus_l * one_minus_l * v * v);
        fit.add(v * v * l * l * (-ln_lambda).exp());
    }
    let test_risk = e_delta * (bias.value() + target.sigma2);
    let shrink = if sol.delta == 0.0 {
        0.0
    } else {
        (sol.delta.ln() - nf.ln() - u).exp()
    };
    let train_risk = shrink * shrink * test_risk;
    // Σ λ/(λ+κ)² = Σ L(1−L)/κ
    let variance_weight = if m.sum_lq == 0.0 {
        0.0
    } else {
        (m.sum_lq.ln() - u).exp()
    };
    let hilbert_norm_sq = fit.value() + test_risk / nf * variance_weight;
    Ok(RiskReport {
        n,
        delta: sol.delta,
        kappa: sol.kappa,
        ln_kappa: u,
        e_delta,
        test_risk,
        train_risk,
        hilbert_norm_sq,
        sum_l: m.sum_l,
        sum_l2: m.sum_l2,
    })
}

/// Quantities that must agree at `δ = 0` for any spectrum and target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgelessIdentities {
    /// `n/E₀`
    pub n_over_e0: f64,
    /// `κ₀ Σ λ_i/(λ_i+κ₀)²`
    pub kappa_weighted: f64,
    /// Hilbert norm from the general expression.
    pub norm_general: f64,
    /// `Σ v_i²/(λ_i+κ₀) + σ²/κ₀`
    pub norm_ridgeless: f64,
}

pub fn ridgeless_identities(
    spec: &Spectrum,
    target: &Target,
    n: u64,
) -> Result<RidgelessIdentities> {
    let rep = risk_report(spec, target, n, 0.0)?;
    let m = spec.mode_sums(rep.ln_kappa);
    let u = rep.ln_kappa;
    let mut acc = CompensatedSum::new();
    for (i, &v) in target.coeffs.iter().enumerate() {
        if v != 0.0 {
            // 1/(λ+κ) = e^{-u}/(1 + λ/κ)
            let ratio = (spec.ln_eigenvalue(i as u64 + 1) - u).exp();
            acc.add(v * v * (-u).exp() / (1.0 + ratio));
        }
    }
    acc.add(target.sigma2 * (-u).exp());
    Ok(RidgelessIdentities {
        n_over_e0: n as f64 / rep.e_delta,
        kappa_weighted: m.sum_lq,
        norm_general: rep.hilbert_norm_sq,
        norm_ridgeless: acc.value(),
    })
}

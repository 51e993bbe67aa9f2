//! Inner-product kernels on the boolean hypercube in the polynomial regime
//! `n ≍ d^l`.
//!
//! Degree-`k` parity functions span a space of dimension `B(d,k) = C(d,k)`,
//! and the kernel spreads its degree-`k` weight `μ_k` evenly over it, giving
//! a block spectrum with eigenvalue `μ_k/B(d,k)` of multiplicity `B(d,k)`.

use serde::Serialize;

use crate::bounds::e0_upper_big_rank;
use crate::error::{Error, Result};
use crate::numeric::binomial;
use crate::risk::Target;
use crate::spectrum::{Family, Spectrum, Truncation};
use crate::tuning::tune_ridge;

/// Largest total mode count accepted, so that every index is exact in `f64`.
const MODE_BUDGET: u128 = 1 << 53;
/// Longest coefficient list materialized for a block target.
const TARGET_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockKernelSpec {
    d: u64,
    /// `μ_k` for `k = 0..=k_max`.
    mu: Vec<f64>,
}

impl BlockKernelSpec {
    pub fn new(d: u64, mu: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument(
                "dimension d must be at least 1".into(),
            ));
        }
        if mu.is_empty() {
            return Err(Error::InvalidArgument(
                "mu needs at least one degree".into(),
            ));
        }
        if mu.len() as u64 > d + 1 {
            return Err(Error::InvalidArgument(format!(
                "the hypercube in dimension {d} has no degree above {d}"
            )));
        }
        if let Some(m) = mu.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mu must be finite and non-negative, got {m}"
            )));
        }
        Ok(Self { d, mu })
    }

    /// `μ_k = c^k` for `k = 0..=k_max`.
    pub fn geometric(d: u64, c: f64, k_max: u64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio c must be positive, got {c}"
            )));
        }
        Self::new(d, (0..=k_max).map(|k| c.powi(k as i32)).collect())
    }

    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn k_max(&self) -> u64 {
        self.mu.len() as u64 - 1
    }

    /// `B(d,k)`.
    pub fn basis_dim(&self, k: u64) -> Result<u128> {
        binomial(self.d, k)
            .ok_or_else(|| Error::OverflowGuard(format!("C({}, {k}) overflows", self.d)))
    }

    /// Cumulative dimensions `C_m = Σ_{k≤m} B(d,k)` for `m = 0..=k_max`.
    pub fn cumulative_dims(&self) -> Result<Vec<u128>> {
        let mut acc: u128 = 0;
        (0..=self.k_max())
            .map(|k| {
                acc = acc
                    .checked_add(self.basis_dim(k)?)
                    .ok_or_else(|| Error::OverflowGuard("cumulative dimension overflows".into()))?;
                Ok(acc)
            })
            .collect()
    }

    /// `(degree, eigenvalue, multiplicity)` sorted by eigenvalue, descending.
    fn sorted_blocks(&self) -> Result<Vec<(u64, f64, u64)>> {
        let total = *self.cumulative_dims()?.last().expect("k_max ≥ 0");
        if total > MODE_BUDGET {
            return Err(Error::OverflowGuard(format!(
                "{total} modes exceed the budget of 2^53"
            )));
        }
        let mut blocks: Vec<(u64, f64, u64)> = (0..=self.k_max())
            .map(|k| {
                let b = self.basis_dim(k)? as u64;
                Ok((k, self.mu[k as usize] / b as f64, b))
            })
            .collect::<Result<_>>()?;
        // stable: equal eigenvalues keep degree order
        blocks.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(blocks)
    }
}

/// Block spectrum `(μ_k/B(d,k), B(d,k))`.
pub fn block_spectrum(spec: &BlockKernelSpec) -> Result<Spectrum> {
    let blocks = spec
        .sorted_blocks()?
        .into_iter()
        .map(|(_, v, m)| (v, m))
        .collect();
    Spectrum::new(Family::Blocks { blocks }, Truncation::default())
}

/// Target described by its energy `‖P_k f*‖²` in each degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyTarget {
    pub degree_energy: Vec<f64>,
    pub sigma2: f64,
}

impl PolyTarget {
    pub fn new(degree_energy: Vec<f64>, sigma2: f64) -> Result<Self> {
        if let Some(e) = degree_energy.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(Error::InvalidTarget(format!(
                "degree energies must be finite and non-negative, got {e}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::InvalidTarget(format!(
                "sigma2 must be finite and non-negative, got {sigma2}"
            )));
        }
        Ok(Self {
            degree_energy,
            sigma2,
        })
    }

    /// Eigencoefficients on the block spectrum. Modes within a block share
    /// an eigenvalue, so all of a degree's energy can sit on its first mode.
    pub fn to_target(&self, spec: &BlockKernelSpec) -> Result<Target> {
        if self.degree_energy.len() > spec.mu.len() {
            return Err(Error::InvalidTarget(format!(
                "target has energy in degree {} but the kernel stops at degree {}",
                self.degree_energy.len() - 1,
                spec.k_max()
            )));
        }
        let mut starts = vec![0u64; spec.mu.len()];
        let mut pos = 0u64;
        for (deg, _, mult) in spec.sorted_blocks()? {
            starts[deg as usize] = pos;
            pos += mult;
        }
        let mut coeffs = Vec::new();
        for (deg, &e) in self.degree_energy.iter().enumerate() {
            if e == 0.0 {
                continue;
            }
            if spec.mu[deg] == 0.0 {
                return Err(Error::InvalidTarget(format!(
                    "degree {deg} carries energy but has zero kernel weight"
                )));
            }
            let idx = starts[deg];
            if idx >= TARGET_CAP {
                return Err(Error::OverflowGuard(format!(
                    "degree {deg} starts at mode {idx}, past the coefficient cap"
                )));
            }
            if coeffs.len() as u64 <= idx {
                coeffs.resize(idx as usize + 1, 0.0);
            }
            coeffs[idx as usize] = e.sqrt();
        }
        Target::new(coeffs, self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyReport {
    pub d: u64,
    pub n: u64,
    /// `ln n / ln d`.
    pub l_eff: f64,
    pub floor_l: u64,
    /// `Σ_{k≤⌊l⌋} B(d,k)`.
    pub k_signal: u64,
    /// `B(d, ⌈l⌉)`, with `⌈l⌉ = ⌊l⌋ + 1` for integer `l`.
    pub r_k_lower: f64,
    /// `R_k` of the block spectrum at `k = k_signal`.
    pub r_k_actual: f64,
    /// `(1 − k/n)⁻²(1 − n/R_k)⁻¹` at `k = k_signal`.
    pub e0_upper_at_signal: Option<f64>,
    /// `σ² + Σ_{k>⌊l⌋} ‖P_k f*‖²`.
    pub plateau_risk: f64,
    /// Tuned omniscient risk on the block spectrum.
    pub tuned_risk: Option<f64>,
}

/// Regime summary at sample size `n`.
pub fn poly_regime_report(
    spec: &BlockKernelSpec,
    target: &PolyTarget,
    n: u64,
) -> Result<PolyReport> {
    if n < 2 {
        return Err(Error::InvalidArgument("n must be at least 2".into()));
    }
    if spec.d < 2 {
        return Err(Error::InvalidArgument(
            "the polynomial regime needs d ≥ 2".into(),
        ));
    }
    let cumulative = spec.cumulative_dims()?;
    let nn = n as u128;
    if let Some(&c) = cumulative.iter().find(|&&c| nn <= 2 * c && 2 * nn >= c) {
        return Err(Error::AtDescentPeak {
            n,
            boundary: c as u64,
        });
    }
    let l_eff = (n as f64).ln() / (spec.d as f64).ln();
    let floor_l = l_eff.floor() as u64;
    let ceil_l = floor_l + 1;
    let k_signal: u128 = (0..=floor_l)
        .map(|k| spec.basis_dim(k))
        .try_fold(0u128, |acc, b| b.map(|b| acc + b))?;
    let k_signal = u64::try_from(k_signal)
        .map_err(|_| Error::OverflowGuard("signal dimension overflows u64".into()))?;
    let r_k_lower = spec.basis_dim(ceil_l)? as f64;

    let spectrum = block_spectrum(spec)?;
    let er = spectrum.effective_ranks(k_signal)?;
    let e0_upper_at_signal = if k_signal < n {
        e0_upper_big_rank(&spectrum, n, k_signal)?
    } else {
        None
    };
    let beyond: f64 = target
        .degree_energy
        .iter()
        .enumerate()
        .filter(|(k, _)| *k as u64 > floor_l)
        .map(|(_, e)| e)
        .sum();
    let tuned_risk = tune_ridge(&spectrum, &target.to_target(spec)?, n)
        .ok()
        .map(|t| t.risk_star);
    Ok(PolyReport {
        d: spec.d,
        n,
        l_eff,
        floor_l,
        k_signal,
        r_k_lower,
        r_k_actual: er.r_big,
        e0_upper_at_signal,
        plateau_risk: target.sigma2 + beyond,
        tuned_risk,
    })
}

//! Gaussian-design Monte Carlo for ridge regression.
//!
//! Each trial draws `n` samples with independent standard normal features
//! `φ_j`, builds `ψ_j = √λ_j φ_j`, fits ridge (or ridgeless) regression
//! through the `n × n` kernel system and evaluates the conditional test risk
//! in closed form from the fitted weights, so no held-out sample is needed.
//! All ridge values of one trial share the same draw.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{pairwise_sum, CompensatedSum};
use crate::risk::{risk_report, Target};
use crate::spectrum::Spectrum;

/// Feature count cap for finite spectra simulated in full.
const MAX_FEATURES: u64 = 1 << 20;
const MIN_FEATURES: u64 = 2000;
const FEATURES_PER_SAMPLE: u64 = 20;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub spectrum: Spectrum,
    pub target: Target,
    pub n: u64,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Number of simulated features; defaults to `max(20n, 2000)` for
    /// infinite spectra and to every positive mode for finite ones.
    pub features: Option<usize>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Per-ridge outcome of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub delta: f64,
    pub test_risk: f64,
    pub train_err: f64,
    pub norm_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McDeltaReport {
    pub delta: f64,
    pub empirical_mean_risk: f64,
    pub std_error: f64,
    pub empirical_train: f64,
    pub train_std_error: f64,
    pub empirical_norm_sq: f64,
    pub norm_std_error: f64,
    /// Estimates on the simulated (truncated) spectrum.
    pub omniscient_risk: f64,
    pub omniscient_train: f64,
    pub omniscient_norm_sq: f64,
    /// Risk estimate on the untruncated spectrum, when it exists.
    pub omniscient_risk_full: Option<f64>,
    /// `|mean risk − R̃|/R̃`.
    pub relative_gap: f64,
    /// False when the standard errors rest on a single trial.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub n: u64,
    pub trials: usize,
    pub seed: u64,
    pub features: usize,
    pub per_delta: Vec<McDeltaReport>,
}

/// A configuration resolved to explicit feature scales.
#[derive(Debug, Clone)]
pub struct McSetup {
    n: usize,
    deltas: Vec<f64>,
    seed: u64,
    trials: usize,
    threads: Option<usize>,
    scales: Vec<f64>,
    coeffs: Vec<f64>,
    /// Noise level seen by the fit: target energy on zero-eigenvalue modes
    /// behaves exactly like label noise.
    sigma: f64,
    truncated: Spectrum,
}

impl McConfig {
    pub fn prepare(&self) -> Result<McSetup> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| d.is_nan() || **d < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ridge values must be non-negative, got {d}"
            )));
        }
        let features = match (self.features, self.spectrum.positive_count()) {
            (Some(f), _) => f as u64,
            (None, Some(p)) if p <= MAX_FEATURES => p,
            _ => (FEATURES_PER_SAMPLE * self.n).max(MIN_FEATURES),
        };
        if features == 0 {
            return Err(Error::InvalidArgument("no features to simulate".into()));
        }
        let lambdas: Vec<f64> = self
            .spectrum
            .materialize(features)
            .into_iter()
            .take_while(|l| *l > 0.0)
            .collect();
        let m = lambdas.len();
        let support = self.target.support();
        let coeffs_all = self.target.coeffs();
        if support > m {
            let beyond_zero = self
                .spectrum
                .positive_count()
                .is_some_and(|p| p as usize <= m);
            if !beyond_zero {
                return Err(Error::TargetBeyondHorizon {
                    index: support,
                    horizon: m,
                });
            }
        }
        let coeffs: Vec<f64> = coeffs_all.iter().take(m).copied().collect();
        let unlearnable: f64 = coeffs_all.iter().skip(m).map(|v| v * v).sum();
        let truncated = Spectrum::explicit(lambdas.clone())?;
        Ok(McSetup {
            n: self.n as usize,
            deltas: self.deltas.clone(),
            seed: self.seed,
            trials: self.trials,
            threads: self.threads,
            scales: lambdas.iter().map(|l| l.sqrt()).collect(),
            coeffs,
            sigma: (self.target.sigma2() + unlearnable).sqrt(),
            truncated,
        })
    }
}

impl McSetup {
    pub fn features(&self) -> usize {
        self.scales.len()
    }

    /// The explicit spectrum actually simulated.
    pub fn truncated_spectrum(&self) -> &Spectrum {
        &self.truncated
    }

    fn target_on_truncation(&self) -> Result<Target> {
        Target::new(self.coeffs.clone(), self.sigma * self.sigma)
    }

    /// One draw; on a singular ridgeless system the draw is repeated once
    /// from a separate stream before giving up.
    pub fn simulate_trial(&self, trial: u64) -> Result<Vec<TrialOutcome>> {
        match self.try_trial(trial, 0) {
            Err(Error::SingularSystem(_)) => self.try_trial(trial, 1),
            other => other,
        }
    }

    fn try_trial(&self, trial: u64, attempt: u64) -> Result<Vec<TrialOutcome>> {
        let (n, m) = (self.n, self.features());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial << 1 | attempt);

        let mut psi = DMatrix::<f64>::from_fn(n, m, |_, _| rng.sample(StandardNormal));
        let mut y = DVector::<f64>::zeros(n);
        for (j, &v) in self.coeffs.iter().enumerate() {
            if v != 0.0 {
                y.axpy(v, &psi.column(j), 1.0);
            }
        }
        for i in 0..n {
            let e: f64 = rng.sample(StandardNormal);
            y[i] += self.sigma * e;
        }
        for (j, &s) in self.scales.iter().enumerate() {
            psi.column_mut(j).scale_mut(s);
        }
        let kernel = &psi * psi.transpose();
        let noise = self.sigma * self.sigma;

        self.deltas
            .iter()
            .map(|&delta| {
                if delta == f64::INFINITY {
                    let energy: f64 = self.coeffs.iter().map(|v| v * v).sum();
                    return Ok(TrialOutcome {
                        delta,
                        test_risk: noise + energy,
                        train_err: y.norm_squared() / n as f64,
                        norm_sq: 0.0,
                    });
                }
                let mut a = kernel.clone();
                for i in 0..n {
                    a[(i, i)] += delta;
                }
                let c = solve_spd(a, &y).ok_or_else(|| {
                    Error::SingularSystem(format!("kernel system at delta = {delta} is singular"))
                })?;
                let w = psi.tr_mul(&c);
                let mut risk = CompensatedSum::new();
                risk.add(noise);
                for j in 0..m {
                    let v = self.coeffs.get(j).copied().unwrap_or(0.0);
                    let e = self.scales[j] * w[j] - v;
                    risk.add(e * e);
                }
                let resid = &y - &kernel * &c;
                Ok(TrialOutcome {
                    delta,
                    test_risk: risk.value(),
                    train_err: resid.norm_squared() / n as f64,
                    norm_sq: w.norm_squared(),
                })
            })
            .collect()
    }

    /// Average over trials and attach the omniscient estimates.
    pub fn run(&self, full: &Spectrum, target: &Target) -> Result<McReport> {
        let run_trials = || -> Vec<Result<Vec<TrialOutcome>>> {
            (0..self.trials as u64)
                .into_par_iter()
                .map(|t| self.simulate_trial(t))
                .collect()
        };
        let outcomes = match self.threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
                .install(run_trials),
            None => run_trials(),
        };
        let outcomes: Vec<Vec<TrialOutcome>> = outcomes.into_iter().collect::<Result<_>>()?;

        let truncated_target = self.target_on_truncation()?;
        let mut per_delta = Vec::with_capacity(self.deltas.len());
        for (d, &delta) in self.deltas.iter().enumerate() {
            let col = |f: fn(&TrialOutcome) -> f64| -> Vec<f64> {
                outcomes.iter().map(|o| f(&o[d])).collect()
            };
            let (risk, risk_se) = mean_and_se(&col(|o| o.test_risk));
            let (train, train_se) = mean_and_se(&col(|o| o.train_err));
            let (norm, norm_se) = mean_and_se(&col(|o| o.norm_sq));
            let est = risk_report(&self.truncated, &truncated_target, self.n as u64, delta)?;
            let full_risk = risk_report(full, target, self.n as u64, delta)
                .ok()
                .map(|r| r.test_risk);
            per_delta.push(McDeltaReport {
                delta,
                empirical_mean_risk: risk,
                std_error: risk_se,
                empirical_train: train,
                train_std_error: train_se,
                empirical_norm_sq: norm,
                norm_std_error: norm_se,
                omniscient_risk: est.test_risk,
                omniscient_train: est.train_risk,
                omniscient_norm_sq: est.hilbert_norm_sq,
                omniscient_risk_full: full_risk,
                relative_gap: (risk - est.test_risk).abs() / est.test_risk,
                reliable: self.trials > 1,
            });
        }
        Ok(McReport {
            n: self.n as u64,
            trials: self.trials,
            seed: self.seed,
            features: self.features(),
            per_delta,
        })
    }
}

/// Cholesky, falling back to pivoted LU when the matrix is not numerically
/// positive definite.
fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match a.clone().cholesky() {
        Some(ch) => Some(ch.solve(b)),
        None => a.lu().solve(b),
    }
    .filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Mean and standard error `s/√t`; the error is 0 for a single trial.
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = pairwise_sum(xs) / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// One trial of `config`.
pub fn simulate_trial(config: &McConfig, trial: u64) -> Result<Vec<TrialOutcome>> {
    config.prepare()?.simulate_trial(trial)
}

/// Run every trial of `config` and compare against the omniscient estimates.
pub fn validate(config: &McConfig) -> Result<McReport> {
    config.prepare()?.run(&config.spectrum, &config.target)
}

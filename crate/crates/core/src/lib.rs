//! Omniscient risk estimates for kernel ridge regression.
//!
//! Given a task eigenspectrum, a target and a sample count, this crate solves
//! for the effective regularization, evaluates the closed-form test risk,
//! training error and Hilbert norm along the ridge path, measures the cost of
//! overfitting against the optimally tuned ridge, evaluates effective-rank
//! bounds on the overfitting coefficient, classifies spectra as benign,
//! tempered or catastrophic, and checks everything against an exact
//! Gaussian-design Monte Carlo simulation.

pub mod bounds;
pub mod cli;
pub mod error;
pub mod kappa;
pub mod mc;
pub mod numeric;
pub mod polyregime;
pub mod risk;
pub mod schema;
pub mod spectrum;
pub mod tuning;

pub use bounds::{bounds_report, classify, BoundsReport, TaxonomyVerdict, Verdict};
pub use error::{Error, Result};
pub use kappa::{solve_kappa, KappaSolution};
pub use mc::{McConfig, McReport};
pub use polyregime::{block_spectrum, poly_regime_report, BlockKernelSpec, PolyReport, PolyTarget};
pub use risk::{risk_report, RiskReport, Target};
pub use spectrum::{EffectiveRanks, Family, Spectrum, TailSums, Truncated, Truncation};
pub use tuning::{cost_of_overfitting, tune_ridge, CostCertificate, TuneResult};

//! Command-line front end.
//!
//! [`run`] parses arguments, dispatches and returns the exit code together
//! with whatever should go to stdout and stderr, so the binary is a thin
//! shell around it and tests can drive it in-process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bounds::{
    best_upper_big_rank, best_upper_small_rank, bounds_report, classify, default_k_grid,
};
use crate::error::{Error, Result};
use crate::kappa::{kappa_brackets, solve_kappa, KappaBrackets};
use crate::mc::McConfig;
use crate::polyregime::{poly_regime_report, BlockKernelSpec, PolyTarget};
use crate::risk::{risk_report, Target};
use crate::schema::{parse_spectrum_str, parse_target_str};
use crate::spectrum::Spectrum;
use crate::tuning::tune_ridge;

pub const THREADS_ENV: &str = "OVERFIT_LAB_THREADS";
pub const SWEEP_HEADER: &str = "n,kappa0,e0,cost,bound_thm2,bound_thm7,verdict";
const DEFAULT_LOG_POINTS: usize = 25;

#[derive(Debug, Parser)]
#[command(
    name = "overfit-lab",
    version,
    about = "Omniscient risk estimates for kernel ridge regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Io {
    /// Spectrum JSON document.
    #[arg(long)]
    spectrum: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Effective regularization, overfitting coefficient and risk estimates.
    Analyze {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        n: u64,
        /// Target JSON; defaults to the zero target with unit noise.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Optimal ridge and the cost of overfitting.
    Tune {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Every effective-rank bound on the overfitting coefficient.
    Bounds {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        n: u64,
    },
    /// Benign, tempered or catastrophic.
    Taxonomy {
        #[command(flatten)]
        io: Io,
        /// Comma-separated k values; defaults to powers of two 16..2^20.
        #[arg(long)]
        k_grid: Option<String>,
    },
    /// CSV sweep over sample sizes.
    Sweep {
        #[command(flatten)]
        io: Io,
        /// `a:b:log[:count]`, `a:b:step` or a comma-separated list.
        #[arg(long)]
        n: String,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Polynomial regime on the boolean hypercube.
    Poly {
        #[arg(long)]
        d: u64,
        /// Comma-separated degree weights μ_0, μ_1, ...
        #[arg(long, conflicts_with = "geometric")]
        mu: Option<String>,
        /// Geometric weights μ_k = c^k; requires --k-max.
        #[arg(long, requires = "k_max")]
        geometric: Option<f64>,
        #[arg(long)]
        k_max: Option<u64>,
        #[arg(long)]
        n: u64,
        /// Comma-separated target energy per degree.
        #[arg(long, default_value = "")]
        degree_energy: String,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the estimates.
    Validate {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        n: u64,
        /// Comma-separated ridges; `auto` expands to 0 and the tuned ridge.
        #[arg(long, default_value = "0,auto")]
        deltas: String,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated feature count; defaults to max(20n, 2000) for infinite spectra.
        #[arg(long)]
        features: Option<usize>,
    },
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn failure(err: &Error) -> Self {
        let mut body = json!({"error": err.kind(), "message": err.to_string()});
        if let Error::Schema { pointer, .. } = err {
            body["pointer"] = json!(pointer);
        }
        Self {
            code: exit_code(err),
            stdout: String::new(),
            stderr: format!("{body}\n"),
        }
    }
}

/// 2 for degenerate conditions, 1 for input errors.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_degenerate() {
        2
    } else {
        1
    }
}

/// Parse and execute, honouring `OVERFIT_LAB_THREADS`.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let threads = match thread_cap() {
        Ok(t) => t,
        Err(e) => return Outcome::failure(&e),
    };
    let result = match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidArgument(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(Report {
            body,
            out,
            degenerate,
        }) => {
            let code = if degenerate { 2 } else { 0 };
            match out {
                Some(path) => match std::fs::write(&path, &body) {
                    Ok(()) => Outcome {
                        code,
                        stdout: String::new(),
                        stderr: String::new(),
                    },
                    Err(e) => Outcome::failure(&Error::InvalidArgument(format!(
                        "cannot write {}: {e}",
                        path.display()
                    ))),
                },
                None => Outcome {
                    code,
                    stdout: body,
                    stderr: String::new(),
                },
            }
        }
        Err(e) => Outcome::failure(&e),
    }
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t >= 1 => Ok(Some(t)),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got '{s}'"
            ))),
        },
    }
}

struct Report {
    body: String,
    out: Option<PathBuf>,
    /// Output was produced but some entries hit a degenerate condition.
    degenerate: bool,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn load_spectrum(path: &Path) -> Result<Spectrum> {
    parse_spectrum_str(&read(path)?)
}

/// The zero target with unit noise when no file is given.
fn load_target(path: Option<&Path>) -> Result<Target> {
    match path {
        Some(p) => parse_target_str(&read(p)?),
        None => Target::zero(1.0),
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("--n must be at least 1".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeOutput {
    n: u64,
    delta: f64,
    kappa0: Option<f64>,
    ln_kappa0: Option<f64>,
    e0: Option<f64>,
    ridgeless_degenerate: bool,
    kappa: f64,
    ln_kappa: f64,
    e_delta: f64,
    test_risk: f64,
    train_risk: f64,
    hilbert_norm_sq: f64,
    sum_l: f64,
    sum_l2: f64,
    cost: Option<f64>,
    brackets: Vec<KappaBrackets>,
}

#[derive(Serialize)]
struct TuneOutput {
    #[serde(flatten)]
    tune: crate::tuning::TuneResult,
    delta_star_infinite: bool,
}

fn dispatch(command: Command) -> Result<Report> {
    match command {
        Command::Analyze {
            io,
            n,
            target,
            delta,
        } => {
            check_n(n)?;
            if delta.is_nan() || delta < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "--delta must be non-negative, got {delta}"
                )));
            }
            let spec = load_spectrum(&io.spectrum)?;
            let target = load_target(target.as_deref())?;
            let at = risk_report(&spec, &target, n, delta)?;
            let ridgeless = match solve_kappa(&spec, n, 0.0) {
                Ok(_) => Some(risk_report(&spec, &target, n, 0.0)?),
                Err(Error::DegenerateInterpolation { .. }) => None,
                Err(e) => return Err(e),
            };
            let cost = match ridgeless {
                Some(_) => tune_ridge(&spec, &target, n)?.cost,
                None => None,
            };
            let brackets = bracket_ks(n)
                .into_iter()
                .map(|k| kappa_brackets(&spec, n, k))
                .collect::<Result<Vec<_>>>()?;
            let out = AnalyzeOutput {
                n,
                delta,
                kappa0: ridgeless.map(|r| r.kappa),
                ln_kappa0: ridgeless.map(|r| r.ln_kappa),
                e0: ridgeless.map(|r| r.e_delta),
                ridgeless_degenerate: ridgeless.is_none(),
                kappa: at.kappa,
                ln_kappa: at.ln_kappa,
                e_delta: at.e_delta,
                test_risk: at.test_risk,
                train_risk: at.train_risk,
                hilbert_norm_sq: at.hilbert_norm_sq,
                sum_l: at.sum_l,
                sum_l2: at.sum_l2,
                cost,
                brackets,
            };
            Ok(Report {
                body: to_json(&out)?,
                out: io.out,
                degenerate: false,
            })
        }
        Command::Tune { io, n, target } => {
            check_n(n)?;
            let spec = load_spectrum(&io.spectrum)?;
            let target = load_target(target.as_deref())?;
            let tune = tune_ridge(&spec, &target, n)?;
            let out = TuneOutput {
                tune,
                delta_star_infinite: tune.delta_star_is_infinite(),
            };
            Ok(Report {
                body: to_json(&out)?,
                out: io.out,
                degenerate: false,
            })
        }
        Command::Bounds { io, n } => {
            check_n(n)?;
            let spec = load_spectrum(&io.spectrum)?;
            let report = bounds_report(&spec, n)?;
            Ok(Report {
                body: to_json(&report)?,
                out: io.out,
                degenerate: false,
            })
        }
        Command::Taxonomy { io, k_grid } => {
            let spec = load_spectrum(&io.spectrum)?;
            let grid = match k_grid {
                Some(s) => parse_u64_list(&s, "--k-grid")?,
                None => default_k_grid(),
            };
            let verdict = classify(&spec, &grid)?;
            Ok(Report {
                body: to_json(&verdict)?,
                out: io.out,
                degenerate: false,
            })
        }
        Command::Sweep { io, n, target } => {
            let ns = parse_n_range(&n)?;
            let spec = load_spectrum(&io.spectrum)?;
            let target = load_target(target.as_deref())?;
            let (body, degenerate) = sweep_csv(&spec, &target, &ns)?;
            Ok(Report {
                body,
                out: io.out,
                degenerate,
            })
        }
        Command::Poly {
            d,
            mu,
            geometric,
            k_max,
            n,
            degree_energy,
            sigma2,
            out,
        } => {
            let spec = match (mu, geometric, k_max) {
                (Some(mu), None, _) => BlockKernelSpec::new(d, parse_f64_list(&mu, "--mu")?)?,
                (None, Some(c), Some(k)) => BlockKernelSpec::geometric(d, c, k)?,
                _ => {
                    return Err(Error::InvalidArgument(
                        "give either --mu or --geometric with --k-max".into(),
                    ))
                }
            };
            let energy = if degree_energy.trim().is_empty() {
                Vec::new()
            } else {
                parse_f64_list(&degree_energy, "--degree-energy")?
            };
            let target = PolyTarget::new(energy, sigma2)?;
            let report = poly_regime_report(&spec, &target, n)?;
            Ok(Report {
                body: to_json(&report)?,
                out,
                degenerate: false,
            })
        }
        Command::Validate {
            io,
            target,
            n,
            deltas,
            trials,
            seed,
            features,
        } => {
            check_n(n)?;
            let spec = load_spectrum(&io.spectrum)?;
            let target = load_target(target.as_deref())?;
            let request = parse_deltas(&deltas)?;
            let mut config = McConfig {
                spectrum: spec,
                target,
                n,
                deltas: Vec::new(),
                trials,
                seed,
                features,
                threads: None,
            };
            let setup = config.prepare()?;
            config.deltas = expand_deltas(&request, || {
                let coeffs = config
                    .target
                    .coeffs()
                    .iter()
                    .take(setup.features())
                    .copied()
                    .collect();
                let truncated_target = Target::new(coeffs, config.target.sigma2())?;
                Ok(tune_ridge(setup.truncated_spectrum(), &truncated_target, n)?.delta_star)
            })?;
            let report = crate::mc::validate(&config)?;
            Ok(Report {
                body: to_json(&report)?,
                out: io.out,
                degenerate: false,
            })
        }
    }
}

/// `k` values at which the analytic brackets on `κ₀` are reported.
fn bracket_ks(n: u64) -> Vec<u64> {
    let mut ks = vec![0];
    let mut k = 1;
    while k < n {
        ks.push(k);
        k *= 4;
    }
    ks
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum DeltaRequest {
    Value(f64),
    Auto,
}

fn parse_deltas(s: &str) -> Result<Vec<DeltaRequest>> {
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    if items.iter().any(|i| i.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "--deltas has an empty entry: '{s}'"
        )));
    }
    items
        .into_iter()
        .map(|item| {
            if item.eq_ignore_ascii_case("auto") {
                return Ok(DeltaRequest::Auto);
            }
            match item.parse::<f64>() {
                Ok(d) if d >= 0.0 => Ok(DeltaRequest::Value(d)),
                _ => Err(Error::InvalidArgument(format!(
                    "--deltas entries must be non-negative numbers or 'auto', got '{item}'"
                ))),
            }
        })
        .collect()
}

/// Resolve `auto` to `{0, δ*}` and drop repeats, keeping first occurrences.
fn expand_deltas<F>(request: &[DeltaRequest], delta_star: F) -> Result<Vec<f64>>
where
    F: FnOnce() -> Result<f64>,
{
    let star = if request.contains(&DeltaRequest::Auto) {
        Some(delta_star()?)
    } else {
        None
    };
    let mut out: Vec<f64> = Vec::new();
    let mut push = |d: f64| {
        if !out.iter().any(|x| x.to_bits() == d.to_bits()) {
            out.push(d);
        }
    };
    for r in request {
        match r {
            DeltaRequest::Value(d) => push(*d),
            DeltaRequest::Auto => {
                push(0.0);
                push(star.unwrap_or(0.0));
            }
        }
    }
    Ok(out)
}

fn parse_f64_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("{flag}: cannot parse '{x}' as a number"))
            })
        })
        .collect()
}

fn parse_u64_list(s: &str, flag: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|x| {
            x.trim().parse::<u64>().map_err(|_| {
                Error::InvalidArgument(format!("{flag}: cannot parse '{x}' as an integer"))
            })
        })
        .collect()
}

/// `a:b:log[:count]`, `a:b:step` or `a,b,c`. Log ranges are rounded to
/// integers and deduplicated.
pub fn parse_n_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("--n: cannot parse range '{s}'"));
    let int = |x: &str| x.trim().parse::<u64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let ns: Vec<u64> = match parts.as_slice() {
        [one] => one.split(',').map(int).collect::<Result<_>>()?,
        [a, b, rest @ ..] => {
            let (a, b) = (int(a)?, int(b)?);
            if a == 0 || b < a {
                return Err(bad());
            }
            match rest {
                ["log"] | ["log", _] => {
                    let count = match rest {
                        [_, c] => int(c)? as usize,
                        _ => DEFAULT_LOG_POINTS,
                    };
                    if count < 2 {
                        return Err(bad());
                    }
                    let (la, lb) = ((a as f64).ln(), (b as f64).ln());
                    let mut v: Vec<u64> = (0..count)
                        .map(|j| {
                            (la + (lb - la) * j as f64 / (count - 1) as f64)
                                .exp()
                                .round() as u64
                        })
                        .collect();
                    v[0] = a;
                    v[count - 1] = b;
                    v.dedup();
                    v
                }
                [step] => {
                    let step = int(step)?;
                    if step == 0 {
                        return Err(bad());
                    }
                    (a..=b).step_by(step as usize).collect()
                }
                _ => return Err(bad()),
            }
        }
        [] => return Err(bad()),
    };
    if ns.is_empty() || ns.contains(&0) {
        return Err(bad());
    }
    Ok(ns)
}

/// `%.12g`-style formatting.
pub fn fmt_sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            sign,
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Format `exp(ln_x)` even when it underflows `f64`.
pub fn fmt_sig12_from_ln(ln_x: f64) -> String {
    let x = ln_x.exp();
    if x.is_normal() || ln_x.is_infinite() {
        return fmt_sig12(x);
    }
    let log10 = ln_x / std::f64::consts::LN_10;
    let mut exp = log10.floor();
    let mut mantissa = 10f64.powf(log10 - exp);
    if format!("{mantissa:.11}").starts_with("10") {
        mantissa /= 10.0;
        exp += 1.0;
    }
    let sign = if exp < 0.0 { '-' } else { '+' };
    format!(
        "{}e{}{:02}",
        trim_zeros(format!("{mantissa:.11}")),
        sign,
        exp.abs()
    )
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_sig12).unwrap_or_default()
}

/// One CSV row per `n`; degenerate rows keep their `n` with empty cells.
fn sweep_csv(spec: &Spectrum, target: &Target, ns: &[u64]) -> Result<(String, bool)> {
    let verdict = classify(spec, &default_k_grid())?.verdict;
    let mut body = String::from(SWEEP_HEADER);
    body.push('\n');
    let mut degenerate = false;
    for &n in ns {
        let row = sweep_row(spec, target, n);
        let (kappa0, e0, cost, upper_big, upper_small) = match row {
            Ok(r) => r,
            Err(e) if e.is_degenerate() => {
                degenerate = true;
                (None, None, None, None, None)
            }
            Err(e) => return Err(e),
        };
        writeln!(
            body,
            "{n},{},{},{},{},{},{}",
            kappa0.map(fmt_sig12_from_ln).unwrap_or_default(),
            cell(e0),
            cell(cost),
            cell(upper_big),
            cell(upper_small),
            verdict.as_str()
        )
        .expect("string write");
    }
    Ok((body, degenerate))
}

type SweepRow = (
    Option<f64>,
    Option<f64>,
    Option<f64>,
    Option<f64>,
    Option<f64>,
);

fn sweep_row(spec: &Spectrum, target: &Target, n: u64) -> Result<SweepRow> {
    let r0 = risk_report(spec, target, n, 0.0)?;
    let cost = tune_ridge(spec, target, n)?.cost;
    let upper_big = best_upper_big_rank(spec, n)?.map(|(_, v)| v);
    let upper_small = best_upper_small_rank(spec, n)?.map(|(_, v)| v);
    Ok((
        Some(r0.ln_kappa),
        Some(r0.e_delta),
        cost,
        upper_big,
        upper_small,
    ))
}

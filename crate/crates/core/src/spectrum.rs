//! Eigenvalue sequences, tail sums and effective ranks.
//!
//! A [`Spectrum`] is immutable. On construction its eigenvalues are resolved
//! into a run-length table (value, multiplicity) covering either the whole
//! spectrum (finite families) or an explicit prefix up to the horizon
//! (infinite families). Beyond the prefix, tail power sums `Σ λ_i^j` come from
//! integral bracketing: for a convex decreasing `f`,
//!
//! ```text
//! ∫_{x+1}^∞ f + f(x+1)/2  ≤  Σ_{i>x} f(i)  ≤  ∫_{x+1/2}^∞ f
//! ```
//!
//! The midpoint is reported and the bracket width is the uncertainty.
//! Log-eigenvalues are stored next to the values so that spectra whose
//! relevant scale underflows `f64` (the exponential family at large `n`)
//! remain usable.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, CompensatedSum};

pub const DEFAULT_HORIZON: usize = 1_000_000;
pub const DEFAULT_TAIL_REL_TOL: f64 = 1e-10;

/// Explicit prefix cap for the exponential family; `e^{-65536}` is far below
/// any effective regularization reachable in practice.
const EXPONENTIAL_PREFIX_CAP: usize = 1 << 16;
/// Hard cap on the size of any materialized explicit list.
const MATERIALIZE_CAP: u64 = 1 << 24;
/// Smallest checkpoint index for series tails.
const FIRST_CHECKPOINT: usize = 16;
/// Largest `λ_{X+1}/κ` for which the tail beyond a checkpoint is summed by series.
pub(crate) const SERIES_RATIO: f64 = 1e-3;
/// Below this, values are handled in log space.
const TINY: f64 = 1e-280;

/// Eigenvalue family.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Explicit list, sorted descending on construction.
    Explicit { eigenvalues: Vec<f64> },
    /// `λ_i = i^{-α}`, `α > 1`.
    PowerLaw { alpha: f64 },
    /// `λ_i = i^{-1} ln^{-α}(i + e)`, `α > 1`.
    LogPower { alpha: f64 },
    /// `λ_i = e^{-i}`.
    Exponential,
    /// `d_s` unit eigenvalues followed by `d_j` eigenvalues equal to `1/d_j`.
    Junk { d_s: u64, d_j: u64 },
    /// `d` unit eigenvalues.
    Isotropic { d: u64 },
    /// `(eigenvalue, multiplicity)` blocks, sorted descending on construction.
    Blocks { blocks: Vec<(f64, u64)> },
}

impl Family {
    pub fn is_infinite(&self) -> bool {
        matches!(
            self,
            Family::PowerLaw { .. } | Family::LogPower { .. } | Family::Exponential
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Explicit { .. } => "explicit",
            Family::PowerLaw { .. } => "power_law",
            Family::LogPower { .. } => "log_power",
            Family::Exponential => "exponential",
            Family::Junk { .. } => "junk",
            Family::Isotropic { .. } => "isotropic",
            Family::Blocks { .. } => "blocks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    /// Number of explicitly resolved indices for infinite families.
    pub horizon: usize,
    /// Relative tolerance on tail sums.
    pub tail_rel_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            tail_rel_tol: DEFAULT_TAIL_REL_TOL,
        }
    }
}

/// `Σ_{i>k} λ_i` and `Σ_{i>k} λ_i²`, with the leading tail eigenvalue `λ_{k+1}`.
///
/// `r` and `q` are the sums normalized by `λ_{k+1}` and `λ_{k+1}²`; they stay
/// finite when `s1`, `s2` underflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailSums {
    pub k: u64,
    pub s1: f64,
    pub s2: f64,
    pub lead: f64,
    pub ln_lead: f64,
    pub r: f64,
    pub q: f64,
    /// Absolute uncertainty on `s1` from the tail bracket (0 when exact).
    pub uncertainty: f64,
}

impl TailSums {
    fn empty(k: u64) -> Self {
        Self {
            k,
            s1: 0.0,
            s2: 0.0,
            lead: 0.0,
            ln_lead: f64::NEG_INFINITY,
            r: 0.0,
            q: 0.0,
            uncertainty: 0.0,
        }
    }

    fn from_normalized(k: u64, ln_lead: f64, r: f64, q: f64, uncertainty: f64) -> Self {
        let lead = ln_lead.exp();
        Self {
            k,
            s1: lead * r,
            s2: lead * lead * q,
            lead,
            ln_lead,
            r,
            q,
            uncertainty,
        }
    }

    /// `ln Σ_{i>k} λ_i`.
    pub fn ln_s1(&self) -> f64 {
        self.ln_lead + self.r.ln()
    }

    pub fn is_degenerate(&self) -> bool {
        self.ln_lead == f64::NEG_INFINITY
    }
}

/// Effective ranks `r_k = S1/λ_{k+1}` and `R_k = S1²/S2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveRanks {
    pub k: u64,
    pub r_small: f64,
    pub r_big: f64,
    /// Set when `λ_{k+1} = 0`; both ranks are then reported as 0.
    pub degenerate: bool,
}

/// Explicit prefix produced by [`Spectrum::truncate`] plus the dropped tail.
#[derive(Debug, Clone)]
pub struct Truncated {
    pub spectrum: Spectrum,
    pub tail: TailSums,
}

/// Learnability sums at a given effective regularization.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ModeSums {
    /// `Σ L_i`
    pub sum_l: f64,
    /// `Σ L_i²`
    pub sum_l2: f64,
    /// `Σ L_i (1 - L_i) = κ Σ λ_i/(λ_i+κ)²`
    pub sum_lq: f64,
    /// `λ_{X+1}/κ` at the checkpoint where the tail series took over.
    pub tail_ratio: f64,
}

#[derive(Debug, Clone)]
struct Checkpoint {
    /// Number of runs (= modes, for infinite families) before the checkpoint.
    run: usize,
    ln_lead: f64,
    /// `Σ_{i>X} (λ_i/λ_{X+1})^j`, `j = 1..4`.
    rel: [f64; 4],
}

#[derive(Debug, Clone)]
struct ModeTable {
    values: Vec<f64>,
    lns: Vec<f64>,
    counts: Vec<u64>,
    /// Cumulative mode count through each run.
    ends: Vec<u64>,
    /// Suffix sums over runs `r..` including any analytic tail; length `runs + 1`.
    suf1: Vec<f64>,
    suf2: Vec<f64>,
    /// Bracket width of the analytic tail sum of `λ`.
    tail_width: f64,
    checkpoints: Vec<Checkpoint>,
    positive: Option<u64>,
}

/// An eigenvalue sequence `λ_1 ≥ λ_2 ≥ … ≥ 0`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    family: Family,
    truncation: Truncation,
    table: Arc<ModeTable>,
}

impl Spectrum {
    pub fn new(family: Family, truncation: Truncation) -> Result<Self> {
        if truncation.horizon < 2 {
            return Err(Error::InvalidSpectrum("horizon must be at least 2".into()));
        }
        if !(truncation.tail_rel_tol > 0.0 && truncation.tail_rel_tol < 1.0) {
            return Err(Error::InvalidSpectrum(
                "tail_rel_tol must lie in (0, 1)".into(),
            ));
        }
        let family = normalize_family(family)?;
        let table = build_table(&family, &truncation)?;
        Ok(Self {
            family,
            truncation,
            table: Arc::new(table),
        })
    }

    pub fn explicit(eigenvalues: Vec<f64>) -> Result<Self> {
        Self::new(Family::Explicit { eigenvalues }, Truncation::default())
    }

    pub fn power_law(alpha: f64) -> Result<Self> {
        Self::new(Family::PowerLaw { alpha }, Truncation::default())
    }

    pub fn log_power(alpha: f64) -> Result<Self> {
        Self::new(Family::LogPower { alpha }, Truncation::default())
    }

    pub fn exponential() -> Result<Self> {
        Self::new(Family::Exponential, Truncation::default())
    }

    pub fn junk(d_s: u64, d_j: u64) -> Result<Self> {
        Self::new(Family::Junk { d_s, d_j }, Truncation::default())
    }

    pub fn isotropic(d: u64) -> Result<Self> {
        Self::new(Family::Isotropic { d }, Truncation::default())
    }

    pub fn blocks(blocks: Vec<(f64, u64)>) -> Result<Self> {
        Self::new(Family::Blocks { blocks }, Truncation::default())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn is_infinite(&self) -> bool {
        self.family.is_infinite()
    }

    /// Number of strictly positive eigenvalues, `None` when infinite.
    pub fn positive_count(&self) -> Option<u64> {
        self.table.positive
    }

    /// True when more than `n` eigenvalues are positive.
    pub fn exceeds(&self, n: u64) -> bool {
        self.positive_count().is_none_or(|p| p > n)
    }

    /// Length of the explicitly resolved prefix for infinite families.
    pub fn prefix_len(&self) -> Option<usize> {
        if self.is_infinite() {
            Some(*self.table.ends.last().unwrap_or(&0) as usize)
        } else {
            None
        }
    }

    /// `Σ λ_i`.
    pub fn trace(&self) -> f64 {
        match self.family {
            Family::Exponential => 1.0 / (1f64.exp() - 1.0),
            _ => self.table.suf1[0],
        }
    }

    /// `λ_i` for a 1-based index; 0 past the end of finite spectra.
    pub fn eigenvalue(&self, i: u64) -> f64 {
        assert!(i >= 1, "eigenvalue indices are 1-based");
        if self.is_infinite() {
            return self.ln_eigenvalue(i).exp();
        }
        let t = &self.table;
        match t.ends.partition_point(|&e| e < i) {
            r if r < t.values.len() => t.values[r],
            _ => 0.0,
        }
    }

    /// `ln λ_i`; `-inf` for zero eigenvalues.
    pub fn ln_eigenvalue(&self, i: u64) -> f64 {
        assert!(i >= 1, "eigenvalue indices are 1-based");
        match self.family {
            Family::PowerLaw { alpha } => -alpha * (i as f64).ln(),
            Family::LogPower { alpha } => log_power_ln(alpha, i as f64),
            Family::Exponential => -(i as f64),
            _ => {
                let t = &self.table;
                let idx = i - 1;
                match t.ends.partition_point(|&e| e <= idx) {
                    r if r < t.lns.len() => t.lns[r],
                    _ => f64::NEG_INFINITY,
                }
            }
        }
    }

    /// Tail sums past index `k` (`k = 0` gives the full sums).
    pub fn tail_sums(&self, k: u64) -> Result<TailSums> {
        let t = &self.table;
        if let Family::Exponential = self.family {
            let e1 = (-1f64).exp();
            let e2 = (-2f64).exp();
            return Ok(TailSums::from_normalized(
                k,
                -((k + 1) as f64),
                1.0 / (1.0 - e1),
                1.0 / (1.0 - e2),
                0.0,
            ));
        }
        let explicit = *t.ends.last().unwrap_or(&0);
        if k < explicit {
            let r = t.ends.partition_point(|&e| e <= k);
            let rem = (t.ends[r] - k) as f64;
            let v = t.values[r];
            let s1 = rem * v + t.suf1[r + 1];
            let s2 = rem * v * v + t.suf2[r + 1];
            let unc = t.tail_width;
            if self.is_infinite() && unc > self.truncation.tail_rel_tol * s1 {
                return Err(Error::Truncation(format!(
                    "tail bracket width {unc:e} exceeds tolerance at k = {k}; raise the horizon"
                )));
            }
            return Ok(TailSums {
                k,
                s1,
                s2,
                lead: v,
                ln_lead: t.lns[r],
                r: s1 / v,
                q: s2 / (v * v),
                uncertainty: unc,
            });
        }
        if !self.is_infinite() {
            return Ok(TailSums::empty(k));
        }
        let (s1, w1) = self.analytic_tail(k, 1)?;
        let (s2, _) = self.analytic_tail(k, 2)?;
        if w1 > self.truncation.tail_rel_tol * s1 {
            return Err(Error::Truncation(format!(
                "tail bracket width {w1:e} exceeds tolerance at k = {k}"
            )));
        }
        let ln_lead = self.ln_eigenvalue(k + 1);
        let lead = ln_lead.exp();
        Ok(TailSums {
            k,
            s1,
            s2,
            lead,
            ln_lead,
            r: s1 / lead,
            q: s2 / (lead * lead),
            uncertainty: w1,
        })
    }

    /// Effective ranks at `k`.
    pub fn effective_ranks(&self, k: u64) -> Result<EffectiveRanks> {
        let ts = self.tail_sums(k)?;
        if ts.is_degenerate() {
            return Ok(EffectiveRanks {
                k,
                r_small: 0.0,
                r_big: 0.0,
                degenerate: true,
            });
        }
        Ok(EffectiveRanks {
            k,
            r_small: ts.r,
            r_big: ts.r * ts.r / ts.q,
            degenerate: false,
        })
    }

    /// Shortest explicit prefix whose dropped tail changes `Σλ` and `Σλ²` by at
    /// most `rel_tol` relatively.
    pub fn truncate(&self, rel_tol: f64) -> Result<Truncated> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidArgument("rel_tol must lie in (0, 1)".into()));
        }
        let full = self.tail_sums(0)?;
        let ok = |k: u64| -> Result<bool> {
            let ts = self.tail_sums(k)?;
            // compare through the normalized sums so underflow is harmless
            let ln1 = ts.ln_s1() - full.ln_s1();
            let ln2 = 2.0 * (ts.ln_lead - full.ln_lead) + (ts.q / full.q).ln();
            Ok(ts.is_degenerate() || (ln1 <= rel_tol.ln() && ln2 <= rel_tol.ln()))
        };
        let mut hi = match self.positive_count() {
            Some(p) => p,
            None => {
                let mut h = 16u64;
                while !ok(h)? {
                    h *= 2;
                    if h > MATERIALIZE_CAP {
                        return Err(Error::Truncation(format!(
                            "tolerance {rel_tol:e} needs more than {MATERIALIZE_CAP} explicit terms"
                        )));
                    }
                }
                h
            }
        };
        let mut lo = 0u64;
        if ok(0)? {
            hi = 0;
        }
        // invariant: ok(hi) and !ok(lo) unless hi == 0
        while hi > 0 && hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if hi > MATERIALIZE_CAP {
            return Err(Error::Truncation(format!(
                "truncated prefix of {hi} terms exceeds the materialization cap"
            )));
        }
        let eigenvalues = self.materialize(hi);
        let tail = self.tail_sums(hi)?;
        let spectrum = Spectrum::new(Family::Explicit { eigenvalues }, self.truncation)?;
        Ok(Truncated { spectrum, tail })
    }

    /// First `len` eigenvalues as an explicit list.
    pub fn materialize(&self, len: u64) -> Vec<f64> {
        if self.is_infinite() {
            return (1..=len).map(|i| self.eigenvalue(i)).collect();
        }
        let t = &self.table;
        let mut out = Vec::with_capacity(len as usize);
        for (v, c) in t.values.iter().zip(t.counts.iter()) {
            let take = (*c).min(len - out.len() as u64);
            out.extend(std::iter::repeat_n(*v, take as usize));
            if out.len() as u64 == len {
                break;
            }
        }
        out.resize(len as usize, 0.0);
        out
    }

    /// Learnability sums at `κ = exp(ln_kappa)`.
    pub(crate) fn mode_sums(&self, ln_kappa: f64) -> ModeSums {
        if ln_kappa == f64::INFINITY {
            return ModeSums::default();
        }
        let t = &self.table;
        let kappa = ln_kappa.exp();
        let linear = kappa > TINY;
        let mut sl = CompensatedSum::new();
        let mut sl2 = CompensatedSum::new();
        let mut slq = CompensatedSum::new();
        let mut add_runs = |from: usize, to: usize| {
            for r in from..to {
                let v = t.values[r];
                let ratio = if linear && v > TINY {
                    kappa / v
                } else {
                    (ln_kappa - t.lns[r]).exp()
                };
                if ratio.is_infinite() {
                    continue;
                }
                let l = 1.0 / (1.0 + ratio);
                let c = t.counts[r] as f64;
                sl.add(c * l);
                sl2.add(c * l * l);
                slq.add(c * l * (ratio * l));
            }
        };
        let mut tail_ratio = 0.0;
        let mut start = 0;
        let mut tail: Option<(f64, [f64; 4], bool)> = None;
        for (i, cp) in t.checkpoints.iter().enumerate() {
            add_runs(start, cp.run);
            start = cp.run;
            let x = (cp.ln_lead - ln_kappa).exp();
            let last = i + 1 == t.checkpoints.len();
            if x <= SERIES_RATIO || last {
                tail = Some((x, cp.rel, x <= SERIES_RATIO));
                break;
            }
        }
        if t.checkpoints.is_empty() {
            add_runs(0, t.values.len());
        }
        let (mut sum_l, mut sum_l2, mut sum_lq) = (sl.value(), sl2.value(), slq.value());
        if let Some((x, m, series)) = tail {
            tail_ratio = x;
            let (a, b, c) = if series {
                let (y1, y2, y3, y4) = (x, x * x, x * x * x, x * x * x * x);
                (
                    m[0] * y1 - m[1] * y2 + m[2] * y3 - m[3] * y4,
                    m[1] * y2 - 2.0 * m[2] * y3 + 3.0 * m[3] * y4,
                    m[0] * y1 - 2.0 * m[1] * y2 + 3.0 * m[2] * y3 - 4.0 * m[3] * y4,
                )
            } else {
                // two-moment equivalent block: count m1²/m2 at λ_{X+1}·m2/m1
                let count = m[0] * m[0] / m[1];
                let y = x * m[1] / m[0];
                let l = y / (1.0 + y);
                (count * l, count * l * l, count * l * (1.0 - l))
            };
            sum_l += a;
            sum_l2 += b;
            sum_lq += c;
        }
        ModeSums {
            sum_l,
            sum_l2,
            sum_lq,
            tail_ratio,
        }
    }

    /// `Σ_{i>x} λ_i^j` for infinite families via integral bracketing;
    /// returns `(midpoint, width)`.
    fn analytic_tail(&self, x: u64, j: u32) -> Result<(f64, f64)> {
        analytic_tail(&self.family, x, j)
    }
}

fn log_power_ln(alpha: f64, i: f64) -> f64 {
    -(i.ln()) - alpha * (i + std::f64::consts::E).ln().ln()
}

fn normalize_family(family: Family) -> Result<Family> {
    let bad = |m: String| Err(Error::InvalidSpectrum(m));
    match family {
        Family::Explicit { mut eigenvalues } => {
            if eigenvalues.is_empty() {
                return bad("explicit spectrum needs at least one eigenvalue".into());
            }
            if let Some(v) = eigenvalues.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return bad(format!(
                    "eigenvalues must be finite and non-negative, got {v}"
                ));
            }
            eigenvalues.sort_by(|a, b| b.total_cmp(a));
            Ok(Family::Explicit { eigenvalues })
        }
        Family::PowerLaw { alpha } => {
            if !(alpha.is_finite() && alpha > 1.0) {
                return bad(format!("power law needs alpha > 1, got {alpha}"));
            }
            Ok(family)
        }
        Family::LogPower { alpha } => {
            // Σ 1/(i log^α i) diverges for α ≤ 1
            if !(alpha.is_finite() && alpha > 1.0) {
                return bad(format!(
                    "log power law has an infinite trace unless alpha > 1, got {alpha}"
                ));
            }
            Ok(family)
        }
        Family::Exponential => Ok(family),
        Family::Junk { d_j: 0, .. } => bad("junk features need d_j >= 1".into()),
        Family::Junk { .. } => Ok(family),
        Family::Isotropic { d: 0 } => bad("isotropic spectrum needs d >= 1".into()),
        Family::Isotropic { .. } => Ok(family),
        Family::Blocks { mut blocks } => {
            if blocks.is_empty() {
                return bad("block spectrum needs at least one block".into());
            }
            if let Some((v, _)) = blocks.iter().find(|(v, _)| !v.is_finite() || *v < 0.0) {
                return bad(format!(
                    "block eigenvalues must be finite and non-negative, got {v}"
                ));
            }
            blocks.sort_by(|a, b| b.0.total_cmp(&a.0));
            Ok(Family::Blocks { blocks })
        }
    }
}

fn build_table(family: &Family, trunc: &Truncation) -> Result<ModeTable> {
    let mut runs: Vec<(f64, u64)> = Vec::new();
    let mut push = |v: f64, c: u64| {
        if v > 0.0 && c > 0 {
            match runs.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => runs.push((v, c)),
            }
        }
    };
    match family {
        Family::Explicit { eigenvalues } => eigenvalues.iter().for_each(|&v| push(v, 1)),
        Family::Junk { d_s, d_j } => {
            push(1.0, *d_s);
            push(1.0 / *d_j as f64, *d_j);
        }
        Family::Isotropic { d } => push(1.0, *d),
        Family::Blocks { blocks } => blocks.iter().for_each(|&(v, c)| push(v, c)),
        _ => return build_infinite_table(family, trunc),
    }
    let total = runs
        .iter()
        .try_fold(0u64, |acc, (_, c)| acc.checked_add(*c))
        .ok_or_else(|| Error::InvalidSpectrum("mode count overflows u64".into()))?;
    let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let lns = values.iter().map(|v| v.ln()).collect();
    let counts: Vec<u64> = runs.iter().map(|r| r.1).collect();
    let ends = counts
        .iter()
        .scan(0u64, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect();
    let (suf1, suf2) = suffix_sums(&values, &counts, 0.0, 0.0);
    Ok(ModeTable {
        values,
        lns,
        counts,
        ends,
        suf1,
        suf2,
        tail_width: 0.0,
        checkpoints: Vec::new(),
        positive: Some(total),
    })
}

fn suffix_sums(values: &[f64], counts: &[u64], tail1: f64, tail2: f64) -> (Vec<f64>, Vec<f64>) {
    let mut suf1 = vec![0.0; values.len() + 1];
    let mut suf2 = vec![0.0; values.len() + 1];
    suf1[values.len()] = tail1;
    suf2[values.len()] = tail2;
    let mut a1 = CompensatedSum::new();
    let mut a2 = CompensatedSum::new();
    a1.add(tail1);
    a2.add(tail2);
    for r in (0..values.len()).rev() {
        let c = counts[r] as f64;
        a1.add(c * values[r]);
        a2.add(c * values[r] * values[r]);
        suf1[r] = a1.value();
        suf2[r] = a2.value();
    }
    (suf1, suf2)
}

fn build_infinite_table(family: &Family, trunc: &Truncation) -> Result<ModeTable> {
    let horizon = match family {
        Family::Exponential => trunc.horizon.min(EXPONENTIAL_PREFIX_CAP),
        _ => trunc.horizon,
    };
    let lns: Vec<f64> = (1..=horizon as u64)
        .map(|i| match family {
            Family::PowerLaw { alpha } => -alpha * (i as f64).ln(),
            Family::LogPower { alpha } => log_power_ln(*alpha, i as f64),
            _ => -(i as f64),
        })
        .collect();
    let values: Vec<f64> = lns.iter().map(|l| l.exp()).collect();
    let counts = vec![1u64; horizon];
    let ends = (1..=horizon as u64).collect();

    let mut checkpoint_at: Vec<usize> =
        std::iter::successors(Some(FIRST_CHECKPOINT), |x| x.checked_mul(2))
            .take_while(|&x| x < horizon)
            .collect();
    checkpoint_at.push(horizon);

    if let Family::Exponential = family {
        let rel = [1.0, 2.0, 3.0, 4.0].map(|j: f64| 1.0 / (1.0 - (-j).exp()));
        let checkpoints = checkpoint_at
            .iter()
            .map(|&x| Checkpoint {
                run: x,
                ln_lead: -((x + 1) as f64),
                rel,
            })
            .collect();
        let tail1 = (-((horizon + 1) as f64)).exp() * rel[0];
        let tail2 = (-2.0 * (horizon + 1) as f64).exp() * rel[1];
        let (suf1, suf2) = suffix_sums(&values, &counts, tail1, tail2);
        return Ok(ModeTable {
            values,
            lns,
            counts,
            ends,
            suf1,
            suf2,
            tail_width: 0.0,
            checkpoints,
            positive: None,
        });
    }

    let mut tails = [0.0; 4];
    let mut tail_width = 0.0;
    for j in 1..=4u32 {
        let (mid, width) = analytic_tail(family, horizon as u64, j)?;
        tails[j as usize - 1] = mid;
        if j == 1 {
            tail_width = width;
        }
    }
    if tail_width > trunc.tail_rel_tol * tails[0] {
        return Err(Error::Truncation(format!(
            "horizon {horizon} too small: tail bracket width {tail_width:e} exceeds tolerance"
        )));
    }
    let (suf1, suf2) = suffix_sums(&values, &counts, tails[0], tails[1]);

    // moments for series tails, accumulated backwards from the horizon
    let mut acc = tails.map(|t| {
        let mut c = CompensatedSum::new();
        c.add(t);
        c
    });
    let mut checkpoints = Vec::with_capacity(checkpoint_at.len());
    let lead_h = match family {
        Family::PowerLaw { alpha } => -alpha * ((horizon + 1) as f64).ln(),
        Family::LogPower { alpha } => log_power_ln(*alpha, (horizon + 1) as f64),
        _ => unreachable!(),
    };
    let mut pending = checkpoint_at.iter().rev().peekable();
    let mut idx = horizon;
    loop {
        if let Some(&&x) = pending.peek() {
            if x == idx {
                let ln_lead = if x == horizon { lead_h } else { lns[x] };
                let lead = ln_lead.exp();
                let mut rel = [0.0; 4];
                for j in 0..4 {
                    rel[j] = acc[j].value() / lead.powi(j as i32 + 1);
                }
                checkpoints.push(Checkpoint {
                    run: x,
                    ln_lead,
                    rel,
                });
                pending.next();
            }
        }
        if idx == 0 || pending.peek().is_none() {
            break;
        }
        idx -= 1;
        let v = values[idx];
        let mut p = v;
        for a in acc.iter_mut() {
            a.add(p);
            p *= v;
        }
    }
    checkpoints.reverse();
    Ok(ModeTable {
        values,
        lns,
        counts,
        ends,
        suf1,
        suf2,
        tail_width,
        checkpoints,
        positive: None,
    })
}

/// `∫_a^∞ λ(t)^j dt` for the smooth infinite families.
fn tail_integral(family: &Family, a: f64, j: u32) -> f64 {
    match family {
        Family::PowerLaw { alpha } => {
            let s = alpha * j as f64;
            a.powf(1.0 - s) / (s - 1.0)
        }
        Family::LogPower { alpha } => log_power_tail_integral(*alpha, a, j),
        Family::Exponential => (-(j as f64) * a).exp() / j as f64,
        _ => 0.0,
    }
}

/// `∫_a^∞ (t ln^α(t+e))^{-j} dt`, by substituting `u = ln t`.
fn log_power_tail_integral(alpha: f64, a: f64, j: u32) -> f64 {
    let u0 = a.ln();
    // ln(e^u + e)
    let ell = |u: f64| u + (1.0 - u).exp().ln_1p();
    if j == 1 {
        // ∫ u^{-α} du in closed form plus an exponentially decaying correction
        let head = u0.powf(1.0 - alpha) / (alpha - 1.0);
        let corr = gauss_legendre(|u| ell(u).powf(-alpha) - u.powf(-alpha), u0, u0 + 60.0, 60);
        head + corr
    } else {
        let jf = j as f64;
        let span = 60.0 / (jf - 1.0);
        let body = gauss_legendre(
            |s| ((1.0 - jf) * s).exp() * ell(u0 + s).powf(-alpha * jf),
            0.0,
            span,
            60,
        );
        ((1.0 - jf) * u0).exp() * body
    }
}

fn analytic_tail(family: &Family, x: u64, j: u32) -> Result<(f64, f64)> {
    let xf = x as f64;
    let f_next = match family {
        Family::PowerLaw { alpha } => (-alpha * (xf + 1.0).ln() * j as f64).exp(),
        Family::LogPower { alpha } => (log_power_ln(*alpha, xf + 1.0) * j as f64).exp(),
        Family::Exponential => (-(xf + 1.0) * j as f64).exp(),
        _ => return Ok((0.0, 0.0)),
    };
    let lo = tail_integral(family, xf + 1.0, j) + 0.5 * f_next;
    let hi = tail_integral(family, xf + 0.5, j);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Truncation(format!(
            "tail integral not finite at index {x}"
        )));
    }
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    Ok((0.5 * (lo + hi), hi - lo))
}

//! Search for the entries of largest magnitude in a CTD.
//!
//! Two iterations are provided. The power method multiplies the iterate by
//! `U` entrywise each step, so the ratio between competing entries shrinks
//! geometrically. The squaring method replaces the iterate by its own
//! Hadamard square, so every entry of `Y_k` is proportional to the matching
//! entry of `U` raised to the power `2^k`, and ratios shrink quadratically.
//! Both reduce the separation rank after every product. Candidate locations
//! are read off the terms of the final iterate and evaluated on `U`.

mod candidates;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ctd::Ctd;
use crate::error::{Error, Result};
use crate::reduce::{reduce, ReductionConfig};

pub use candidates::{extract_candidates, Candidate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    #[serde(alias = "power", alias = "power-method")]
    PowerMethod,
    #[default]
    Squaring,
}

/// When to stop iterating (besides the `k_max` cap).
///
/// Written as `fixed:N`, `lambda:DELTA` or `rank:R` in configs and on the
/// command line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Termination {
    /// Run exactly `n` iterations.
    FixedIterations(usize),
    /// Stop once `|lambda_k - lambda_{k-1}| / |lambda_{k-1}| < delta`.
    LambdaStall(f64),
    /// Stop once the iterate has at most this many terms.
    RankThreshold(usize),
}

impl Default for Termination {
    fn default() -> Self {
        Termination::RankThreshold(1)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::FixedIterations(n) => write!(f, "fixed:{n}"),
            Termination::LambdaStall(d) => write!(f, "lambda:{d}"),
            Termination::RankThreshold(r) => write!(f, "rank:{r}"),
        }
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("termination must be fixed:N, lambda:DELTA or rank:R, got {s:?}"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        let t = match kind.trim() {
            "fixed" => Termination::FixedIterations(value.trim().parse().map_err(|_| bad())?),
            "lambda" => Termination::LambdaStall(value.trim().parse().map_err(|_| bad())?),
            "rank" => Termination::RankThreshold(value.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        t.validate()?;
        Ok(t)
    }
}

impl TryFrom<String> for Termination {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Termination> for String {
    fn from(t: Termination) -> String {
        t.to_string()
    }
}

impl Termination {
    fn validate(&self) -> Result<()> {
        match *self {
            Termination::LambdaStall(d) if !(d > 0.0 && d.is_finite()) => {
                Err(Error::InvalidConfig(format!("lambda stall tolerance must be positive, got {d}")))
            }
            Termination::RankThreshold(0) => Err(Error::InvalidConfig("rank threshold must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaxEntrySearchConfig {
    pub method: SearchMethod,
    /// Rank reduction applied after every product; `None` disables it.
    pub reduction: Option<ReductionConfig>,
    pub k_max: usize,
    pub termination: Termination,
    /// Candidate locations reported per term of the final iterate.
    #[serde(alias = "candidate_extraction")]
    pub max_per_term: usize,
}

impl Default for MaxEntrySearchConfig {
    fn default() -> Self {
        MaxEntrySearchConfig {
            method: SearchMethod::Squaring,
            reduction: Some(ReductionConfig::default()),
            k_max: 100,
            termination: Termination::RankThreshold(1),
            max_per_term: 1,
        }
    }
}

impl MaxEntrySearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        if self.max_per_term == 0 {
            return Err(Error::InvalidConfig("max_per_term must be at least 1".into()));
        }
        self.termination.validate()?;
        if let Some(r) = &self.reduction {
            r.validate()?;
        }
        Ok(())
    }
}

/// One row of a search trace. Iteration 0 describes the starting iterate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub rank: usize,
    /// Rank of the product before reduction (equal to `rank` at iteration 0).
    pub rank_before_reduction: usize,
    pub lambda: Option<f64>,
    /// Largest absolute entry of each term of `Y_k`, descending.
    pub term_maxima: Vec<f64>,
    /// Relative error reported by the reduction at this step.
    pub reduction_error: f64,
    /// False when the reduction could not meet its tolerance at this step.
    pub tolerance_met: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Termination,
    IterationCap,
}

#[derive(Clone, Debug, Serialize)]
pub struct MaxEntryTrace {
    pub method: SearchMethod,
    pub termination: Termination,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    /// Iteration 1 reproduced the starting iterate and its largest entry is
    /// not unique: every tied entry is an equally good answer.
    pub degenerate_plateau: bool,
    pub candidates: Vec<Candidate>,
    /// Seconds spent in each iteration, aligned with `iterations`.
    #[serde(skip)]
    pub wall_times: Vec<f64>,
    #[serde(skip)]
    pub final_iterate: Ctd,
}

impl MaxEntryTrace {
    /// Number of iterations performed (the last `k`).
    pub fn iteration_count(&self) -> usize {
        self.iterations.last().map_or(0, |r| r.k)
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.first()
    }

    pub fn total_time(&self) -> f64 {
        self.wall_times.iter().sum()
    }

    /// Per-iteration plot data: `k,rank,lambda,term_1,...,term_R`, padded
    /// with empty cells to the largest rank in the trace.
    pub fn to_csv(&self) -> String {
        let width = self.iterations.iter().map(|r| r.term_maxima.len()).max().unwrap_or(0);
        let mut out = String::from("k,rank,lambda");
        for t in 1..=width {
            out.push_str(&format!(",term_{t}"));
        }
        out.push('\n');
        for r in &self.iterations {
            out.push_str(&format!("{},{},", r.k, r.rank));
            if let Some(l) = r.lambda {
                out.push_str(&format!("{l:e}"));
            }
            for t in 0..width {
                out.push(',');
                if let Some(m) = r.term_maxima.get(t) {
                    out.push_str(&format!("{m:e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn record(k: usize, y: &Ctd, before: usize, lambda: Option<f64>, error: f64, met: bool) -> IterationRecord {
    let mut term_maxima = y.term_max_abs();
    term_maxima.sort_by(|a, b| b.total_cmp(a));
    IterationRecord {
        k,
        rank: y.rank(),
        rank_before_reduction: before,
        lambda,
        term_maxima,
        reduction_error: error,
        tolerance_met: met,
    }
}

fn normalized(q: &Ctd, iteration: usize) -> Result<Ctd> {
    let n = q.frobenius_norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateIterate {
            iteration,
            message: format!("iterate has Frobenius norm {n}"),
        });
    }
    Ok(q.scale(1.0 / n))
}

/// Reduces and normalizes a product. Reduction is scale-invariant, so the
/// product is not normalized first (that would cost a full term Gram matrix).
fn reduced(q: &Ctd, cfg: &MaxEntrySearchConfig, k: usize) -> Result<(Ctd, f64, bool)> {
    let (r, error, met) = match &cfg.reduction {
        Some(rc) => {
            let r = reduce(q, rc)?;
            (r.ctd, r.meta.relative_error, r.meta.tolerance_met)
        }
        None => (q.clone(), 0.0, true),
    };
    Ok((normalized(&r, k)?, error, met))
}

fn should_stop(cfg: &MaxEntrySearchConfig, k: usize, rank: usize, lambdas: &[Option<f64>], first_comparable: usize) -> bool {
    match cfg.termination {
        Termination::FixedIterations(n) => k >= n,
        Termination::RankThreshold(r) => k >= 1 && rank <= r,
        Termination::LambdaStall(delta) => {
            if k < first_comparable {
                return false;
            }
            match (lambdas[k], lambdas[k - 1]) {
                (Some(now), Some(prev)) if prev != 0.0 => ((now - prev) / prev).abs() < delta,
                _ => false,
            }
        }
    }
}

/// True when `b` is a multiple of `a` and the largest entry of `b` is tied.
fn plateau(a: &Ctd, b: &Ctd) -> Result<bool> {
    let na = a.frobenius_norm();
    let nb = b.frobenius_norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(false);
    }
    let cos = a.inner(b)? / (na * nb);
    if cos.abs() < 1.0 - 1e-12 {
        return Ok(false);
    }
    if b.rank() != 1 {
        return Ok(true);
    }
    let ties: usize = b
        .factors()
        .iter()
        .map(|f| {
            let col = f.column(0);
            let top = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            col.iter().filter(|x| x.abs() >= top * (1.0 - 1e-12)).count()
        })
        .product();
    Ok(ties > 1)
}

fn check_input(u: &Ctd, cfg: &MaxEntrySearchConfig) -> Result<()> {
    cfg.validate()?;
    if u.is_zero() || u.frobenius_norm() == 0.0 {
        return Err(Error::DegenerateIterate { iteration: 0, message: "the input tensor is zero".into() });
    }
    Ok(())
}

struct Run<'a> {
    u: &'a Ctd,
    cfg: &'a MaxEntrySearchConfig,
    records: Vec<IterationRecord>,
    lambdas: Vec<Option<f64>>,
    times: Vec<f64>,
    iterates: [Option<Ctd>; 2],
}

impl<'a> Run<'a> {
    fn finish(self, method: SearchMethod, y: Ctd, stop_reason: StopReason) -> Result<MaxEntryTrace> {
        let degenerate_plateau = match &self.iterates {
            [Some(y0), Some(y1)] => plateau(y0, y1)?,
            _ => false,
        };
        let candidates = extract_candidates(&y, self.u, self.cfg.max_per_term)?;
        Ok(MaxEntryTrace {
            method,
            termination: self.cfg.termination,
            iterations: self.records,
            stop_reason,
            degenerate_plateau,
            candidates,
            wall_times: self.times,
            final_iterate: y,
        })
    }
}

/// Power iteration: `Q_k = U o Y_{k-1}`, `lambda_k = <Y_{k-1}, Q_k>`,
/// `Y_k` the reduced and normalized `Q_k`. `Y_0` is the rank-1 tensor with
/// every entry `prod_j 1/M_j`.
///
/// `Y_0` is not normalized, so with [`Termination::LambdaStall`] the first
/// comparison is between `lambda_3` and `lambda_2`.
pub fn power_method_max(u: &Ctd, cfg: &MaxEntrySearchConfig) -> Result<MaxEntryTrace> {
    check_input(u, cfg)?;
    let start = Instant::now();
    let entry: f64 = u.modes().iter().map(|&m| 1.0 / m as f64).product();
    let mut y = Ctd::uniform(u.modes(), entry)?;
    let mut run = Run {
        u,
        cfg,
        records: vec![record(0, &y, y.rank(), None, 0.0, true)],
        lambdas: vec![None],
        times: vec![start.elapsed().as_secs_f64()],
        iterates: [Some(y.clone()), None],
    };
    for k in 1..=cfg.k_max {
        let t = Instant::now();
        let q = u.hadamard(&y)?;
        let lambda = y.inner(&q)?;
        let (next, error, met) = reduced(&q, cfg, k)?;
        y = next;
        run.records.push(record(k, &y, q.rank(), Some(lambda), error, met));
        run.lambdas.push(Some(lambda));
        run.times.push(t.elapsed().as_secs_f64());
        if k == 1 {
            run.iterates[1] = Some(y.clone());
        }
        if should_stop(cfg, k, y.rank(), &run.lambdas, 3) {
            return run.finish(SearchMethod::PowerMethod, y, StopReason::Termination);
        }
    }
    run.finish(SearchMethod::PowerMethod, y, StopReason::IterationCap)
}

/// Squaring iteration: `Y_0 = U / ||U||`, `Y_k` the reduced and normalized
/// `Y_{k-1} o Y_{k-1}`, `lambda_k = <Y_k, U>`.
pub fn squaring_max(u: &Ctd, cfg: &MaxEntrySearchConfig) -> Result<MaxEntryTrace> {
    check_input(u, cfg)?;
    let start = Instant::now();
    let mut y = normalized(&u.renormalize(), 0)?;
    let lambda0 = y.inner(u)?;
    let mut run = Run {
        u,
        cfg,
        records: vec![record(0, &y, y.rank(), Some(lambda0), 0.0, true)],
        lambdas: vec![Some(lambda0)],
        times: vec![start.elapsed().as_secs_f64()],
        iterates: [Some(y.clone()), None],
    };
    for k in 1..=cfg.k_max {
        let t = Instant::now();
        let q = y.hadamard_square()?;
        let (next, error, met) = reduced(&q, cfg, k)?;
        y = next;
        let lambda = y.inner(u)?;
        run.records.push(record(k, &y, q.rank(), Some(lambda), error, met));
        run.lambdas.push(Some(lambda));
        run.times.push(t.elapsed().as_secs_f64());
        if k == 1 {
            run.iterates[1] = Some(y.clone());
        }
        if should_stop(cfg, k, y.rank(), &run.lambdas, 1) {
            return run.finish(SearchMethod::Squaring, y, StopReason::Termination);
        }
    }
    run.finish(SearchMethod::Squaring, y, StopReason::IterationCap)
}

/// Runs the method selected in `cfg`.
pub fn search(u: &Ctd, cfg: &MaxEntrySearchConfig) -> Result<MaxEntryTrace> {
    match cfg.method {
        SearchMethod::PowerMethod => power_method_max(u, cfg),
        SearchMethod::Squaring => squaring_max(u, cfg),
    }
}

/// Smallest `j` with `(b/a)^(2^j) <= eps`: the number of squaring steps that
/// push the runner-up entry `b` below `eps` relative to the maximum `a`.
pub fn iteration_bound(a: f64, b: f64, eps: f64) -> Result<u32> {
    if !(a.is_finite() && b.is_finite() && b > 0.0) {
        return Err(Error::Domain(format!("need 0 < b < a, got a = {a}, b = {b}")));
    }
    if b >= a {
        return Err(Error::Domain(format!("need b < a, got a = {a}, b = {b}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("need 0 < eps < 1, got {eps}")));
    }
    let q = b / a;
    let powered = |j: u32| (0..j).fold(q, |x, _| x * x);
    let estimate = (eps.ln() / q.ln()).log2().ceil();
    let mut j = if estimate.is_finite() { estimate.clamp(0.0, 1023.0) as u32 } else { 0 };
    while powered(j) > eps {
        j += 1;
    }
    while j > 0 && powered(j - 1) <= eps {
        j -= 1;
    }
    Ok(j)
}

//! Separation-rank reduction: given `U` and a relative tolerance `eps`, find
//! `V` of lower rank with `||U - V|| <= eps ||U||` in the configured norm.
//!
//! Two algorithms are available:
//!
//! * [`ReductionAlgorithm::Interpolative`] keeps a skeleton subset of the
//!   input terms (pivoted Cholesky on the term Gram matrix) and refits their
//!   weights by least squares.
//! * [`ReductionAlgorithm::Als`] fits new terms by alternating least squares,
//!   searching the rank by doubling and then bisection.
//!
//! For the s-norm, the Frobenius residual is used as the working criterion
//! (`s_norm(X) <= ||X||_F`, so meeting it in Frobenius meets it in s-norm).
//! The reported error is in the configured norm; when screening or blocking
//! ran, or the Frobenius bound already meets an s-norm tolerance, it is an
//! upper bound rather than the exact value.

mod als;
mod interpolative;
mod snorm;

use serde::{Deserialize, Serialize};

use crate::ctd::Ctd;
use crate::error::{Error, Result};

pub use als::als_sweep;
pub use snorm::{rank_one_approx, s_norm, RankOneApprox};

use als::{reduce_als, AlsSettings};
use interpolative::{pivoted_cholesky_skeleton, reduce_blocks, skeleton_ctd, term_gram, SkeletonStatus, BLOCK_SIZE};

/// Below this tolerance the Frobenius criterion cannot be resolved through
/// Gram matrices in double precision.
pub const FROBENIUS_EPS_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Frobenius,
    #[serde(alias = "s-norm", alias = "s_norm")]
    SNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReductionAlgorithm {
    Als,
    #[default]
    #[serde(alias = "id")]
    Interpolative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionConfig {
    /// Relative tolerance, `> 0`.
    pub epsilon: f64,
    pub norm: NormKind,
    pub algorithm: ReductionAlgorithm,
    pub max_rank: Option<usize>,
    pub als_max_sweeps: usize,
    /// Relative residual change below which ALS stops; `None` means `1e-3 * epsilon`.
    pub als_stall_tol: Option<f64>,
    /// Ridge added to the ALS normal equations, relative to their trace.
    pub ridge: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            epsilon: 1e-6,
            norm: NormKind::Frobenius,
            algorithm: ReductionAlgorithm::Interpolative,
            max_rank: None,
            als_max_sweeps: 200,
            als_stall_tol: None,
            ridge: 1e-14,
        }
    }
}

impl ReductionConfig {
    pub fn new(epsilon: f64, norm: NormKind, algorithm: ReductionAlgorithm) -> Self {
        ReductionConfig { epsilon, norm, algorithm, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_rank == Some(0) {
            return Err(Error::InvalidConfig("max_rank must be at least 1".into()));
        }
        if self.als_max_sweeps == 0 {
            return Err(Error::InvalidConfig("als_max_sweeps must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("ridge must be non-negative".into()));
        }
        Ok(())
    }

    fn stall_tol(&self) -> f64 {
        self.als_stall_tol.unwrap_or(1e-3 * self.epsilon)
    }
}

/// What happened during one reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionMeta {
    pub input_rank: usize,
    pub rank: usize,
    /// `||U - V|| / ||U||` in the configured norm, or an upper bound on it.
    pub relative_error: f64,
    pub tolerance_met: bool,
    pub algorithm: ReductionAlgorithm,
    pub norm: NormKind,
    /// ALS sweeps spent (including a fallback from the interpolative path).
    pub sweeps: usize,
    /// The interpolative Gram matrix was numerically indefinite and ALS was used instead.
    pub als_fallback: bool,
    /// No smaller rank met the tolerance; the input was returned.
    pub returned_input: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub ctd: Ctd,
    pub meta: ReductionMeta,
}

/// `||U||` in the chosen norm.
pub fn norm(u: &Ctd, kind: NormKind) -> f64 {
    match kind {
        NormKind::Frobenius => u.frobenius_norm(),
        NormKind::SNorm => s_norm(u),
    }
}

/// `||U - V||` in the chosen norm. The Frobenius case uses inner products
/// only, so bitwise-identical inputs give exactly zero.
pub fn norm_of_difference(u: &Ctd, v: &Ctd, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Frobenius => {
            let sq = u.inner(u)? - 2.0 * u.inner(v)? + v.inner(v)?;
            Ok(sq.max(0.0).sqrt())
        }
        NormKind::SNorm => Ok(s_norm(&u.add(&v.scale(-1.0))?)),
    }
}

/// Fraction of the tolerance that may be spent on dropping small terms
/// before the main algorithm runs.
const SCREEN_FRACTION: f64 = 0.5;

/// Inputs with fewer terms than this are not screened: their Gram matrix is
/// cheap and the algorithm gets the whole tolerance.
const SCREEN_MIN_RANK: usize = 256;

/// Inputs with at least this many terms are first reduced block by block
/// (see [`interpolative::reduce_blocks`]), so that no Gram matrix of the
/// full input is ever formed.
const BLOCK_MIN_RANK: usize = 2 * BLOCK_SIZE;

/// Fraction of the tolerance given to the block pass.
const BLOCK_FRACTION: f64 = 0.25;

/// Cheap lower bound on `||U||_F`: the length of the projection of `U` onto
/// its largest term.
fn frobenius_lower_bound(u: &Ctd) -> Result<f64> {
    let Some(top) = (0..u.rank()).max_by(|&a, &b| u.svalues()[a].total_cmp(&u.svalues()[b])) else {
        return Ok(0.0);
    };
    let t = u.select_terms(&[top]);
    Ok((u.inner(&t)? / u.svalues()[top]).abs())
}

/// Splits `u` into the terms to keep and the total s-value of the smallest
/// terms whose combined norm is at most `budget` (triangle inequality).
fn screen(u: &Ctd, budget: f64) -> (Ctd, f64) {
    let mut order: Vec<usize> = (0..u.rank()).collect();
    order.sort_by(|&a, &b| u.svalues()[a].total_cmp(&u.svalues()[b]).then(a.cmp(&b)));
    let mut dropped = 0.0;
    let mut cut = 0;
    for &l in &order {
        let s = u.svalues()[l];
        if dropped + s > budget {
            break;
        }
        dropped += s;
        cut += 1;
    }
    if cut == 0 {
        return (u.clone(), 0.0);
    }
    let mut keep = order[cut..].to_vec();
    keep.sort_unstable();
    (u.select_terms(&keep), dropped)
}

/// The reduction operator. Never increases the rank; when no smaller rank
/// meets the tolerance the (renormalized) input comes back unchanged.
///
/// For large inputs, terms whose s-values add up to at most half the
/// tolerance are dropped first; the Frobenius `relative_error` is then an
/// upper bound rather than the exact value. In the s-norm, the Frobenius
/// bound is reported whenever it already meets the tolerance.
pub fn reduce(u: &Ctd, cfg: &ReductionConfig) -> Result<Reduction> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    if cfg.norm == NormKind::Frobenius && cfg.epsilon < FROBENIUS_EPS_FLOOR {
        warnings.push(format!(
            "epsilon {:e} is below {:e}; the Frobenius criterion is not resolvable in double precision",
            cfg.epsilon, FROBENIUS_EPS_FLOOR
        ));
    }
    let input_rank = u.rank();
    let keep_input = |warnings: Vec<String>, sweeps: usize, als_fallback: bool| Reduction {
        ctd: u.renormalize(),
        meta: ReductionMeta {
            input_rank,
            rank: input_rank,
            relative_error: 0.0,
            tolerance_met: true,
            algorithm: cfg.algorithm,
            norm: cfg.norm,
            sweeps,
            als_fallback,
            returned_input: true,
            warnings,
        },
    };
    if input_rank == 0 {
        return Ok(keep_input(warnings, 0, false));
    }

    // Lower bound on ||U|| in the configured norm; the ALS s-norm is the
    // s-value of one rank-one fit, so it never exceeds the true s-norm.
    let norm_lb = match cfg.norm {
        NormKind::Frobenius => frobenius_lower_bound(u)?,
        NormKind::SNorm => s_norm(u),
    };
    let (kept, dropped) = if input_rank >= SCREEN_MIN_RANK {
        screen(u, SCREEN_FRACTION * cfg.epsilon * norm_lb)
    } else {
        (u.clone(), 0.0)
    };
    let cap = cfg.max_rank.unwrap_or(usize::MAX);
    // Largest-norm bound from a Frobenius norm measured `slack` away from U.
    let norm_from = |measured: f64, slack: f64| match cfg.norm {
        NormKind::Frobenius if slack == 0.0 => measured,
        NormKind::Frobenius => norm_lb.max(measured - slack),
        NormKind::SNorm => norm_lb,
    };
    let als_settings = |norm_u: f64| {
        let tol = (cfg.epsilon * norm_u - dropped).max(0.0);
        AlsSettings {
            tol,
            snorm_tol: (cfg.norm == NormKind::SNorm).then_some(tol),
            max_sweeps: cfg.als_max_sweeps,
            stall_tol: cfg.stall_tol(),
            ridge: cfg.ridge,
        }
    };

    let mut sweeps = 0;
    let mut als_fallback = false;
    let norm_u;
    // (candidate, met, Frobenius distance from `kept` to the candidate)
    let mut candidate: Option<(Ctd, bool, f64)> = match cfg.algorithm {
        ReductionAlgorithm::Interpolative => {
            let (work, block_residual) = if kept.rank() >= BLOCK_MIN_RANK {
                reduce_blocks(&kept, BLOCK_FRACTION * (cfg.epsilon * norm_lb - dropped).max(0.0))?
            } else {
                (kept.clone(), 0.0)
            };
            let gram = term_gram(&work)?;
            let slack = dropped + block_residual;
            norm_u = norm_from(gram.sum().max(0.0).sqrt(), slack);
            let tol = (cfg.epsilon * norm_u - slack).max(0.0);
            let skeleton = pivoted_cholesky_skeleton(&gram, tol * tol, cap);
            let residual = skeleton.residual_sq.sqrt() + block_residual;
            match skeleton.status {
                SkeletonStatus::Met => Some((skeleton_ctd(&work, &skeleton), true, residual)),
                SkeletonStatus::Capped => Some((skeleton_ctd(&work, &skeleton), false, residual)),
                SkeletonStatus::Full if work.rank() < kept.rank() && work.rank() <= cap => {
                    Some((work, true, block_residual))
                }
                SkeletonStatus::Full => None,
                SkeletonStatus::Indefinite => {
                    als_fallback = true;
                    warnings.push(format!(
                        "term Gram matrix numerically indefinite after {} pivots; fell back to ALS",
                        skeleton.pivots.len()
                    ));
                    let out = reduce_als(&kept, cfg.max_rank, &als_settings(norm_u))?;
                    sweeps += out.sweeps;
                    out.fit.map(|f| (f.ctd, f.met, f.residual))
                }
            }
        }
        ReductionAlgorithm::Als => {
            norm_u = norm_from(kept.frobenius_norm(), dropped);
            let out = reduce_als(&kept, cfg.max_rank, &als_settings(norm_u))?;
            sweeps += out.sweeps;
            out.fit.map(|f| (f.ctd, f.met, f.residual))
        }
    };
    if candidate.is_none() && kept.rank() < input_rank && kept.rank() <= cap {
        candidate = Some((kept.clone(), true, 0.0));
    }

    let Some((v, met_by_algorithm, kept_residual)) = candidate else {
        return Ok(keep_input(warnings, sweeps, als_fallback));
    };
    if v.rank() >= input_rank {
        return Ok(keep_input(warnings, sweeps, als_fallback));
    }
    // `kept_residual` is a Frobenius residual in both algorithms, and the
    // s-norm never exceeds the Frobenius norm.
    let bound = kept_residual + dropped;
    let error = match cfg.norm {
        NormKind::Frobenius => bound,
        NormKind::SNorm if bound <= cfg.epsilon * norm_u => bound,
        NormKind::SNorm => norm_of_difference(u, &v, cfg.norm)?,
    };
    let relative_error = if norm_u > 0.0 { error / norm_u } else { 0.0 };
    let tolerance_met = met_by_algorithm || relative_error <= cfg.epsilon;
    if !tolerance_met {
        warnings.push("tolerance not met".into());
    }
    Ok(Reduction {
        meta: ReductionMeta {
            input_rank,
            rank: v.rank(),
            relative_error,
            tolerance_met,
            algorithm: cfg.algorithm,
            norm: cfg.norm,
            sweeps,
            als_fallback,
            returned_input: false,
            warnings,
        },
        ctd: v,
    })
}

/// [`reduce`] with the interpolative algorithm, whatever `cfg.algorithm` says.
pub fn interpolative_reduce(u: &Ctd, cfg: &ReductionConfig) -> Result<Reduction> {
    reduce(u, &ReductionConfig { algorithm: ReductionAlgorithm::Interpolative, ..cfg.clone() })
}

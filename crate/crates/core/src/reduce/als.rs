//! Alternating least squares fitting of a lower-rank CTD.

use nalgebra::{Cholesky, DMatrix};

use crate::ctd::{gram, Ctd};
use crate::error::{Error, Result};
use crate::reduce::snorm::s_norm;

const DROP_NORM: f64 = 1e-300;

/// Working state for fitting `V` to `U`. `V`'s columns stay unit-norm in
/// every dimension except while one is being refit.
pub(crate) struct AlsFit<'a> {
    target: &'a Ctd,
    target_sq: f64,
    svalues: Vec<f64>,
    factors: Vec<DMatrix<f64>>,
    /// `U_k^T V_k`, r_u x r_v.
    cross: Vec<DMatrix<f64>>,
    /// `V_k^T V_k`, r_v x r_v.
    own: Vec<DMatrix<f64>>,
    ridge: f64,
}

impl<'a> AlsFit<'a> {
    pub(crate) fn new(target: &'a Ctd, init: &Ctd, ridge: f64) -> Result<Self> {
        if target.modes() != init.modes() {
            return Err(Error::Shape(format!("modes {:?} vs {:?}", target.modes(), init.modes())));
        }
        let factors = init.factors().to_vec();
        let cross = target.factor_grams(init);
        let own = init.factor_grams(init);
        Ok(AlsFit {
            target,
            target_sq: target.inner(target)?,
            svalues: init.svalues().to_vec(),
            factors,
            cross,
            own,
            ridge,
        })
    }

    fn rank(&self) -> usize {
        self.svalues.len()
    }

    /// Replaces the dimension-`j` factors with the least-squares minimizer of
    /// `||U - V||_F` with all other dimensions held fixed.
    pub(crate) fn update(&mut self, j: usize) -> Result<()> {
        let u = self.target;
        let rv = self.rank();
        let d = u.dims();
        let mut z = DMatrix::from_element(rv, rv, 1.0);
        let mut c = DMatrix::from_fn(u.rank(), rv, |l, _| u.svalues()[l]);
        for k in (0..d).filter(|&k| k != j) {
            z.component_mul_assign(&self.own[k]);
            c.component_mul_assign(&self.cross[k]);
        }
        let shift = self.ridge * z.trace().max(f64::MIN_POSITIVE);
        for a in 0..rv {
            z[(a, a)] += shift;
        }
        // W = U_j diag(s) C, M_j x r_v; solve B (Z + ridge I) = W.
        let w = u.factor(j) * c;
        let chol = Cholesky::new(z).ok_or_else(|| Error::Numerical {
            dimension: j,
            message: "normal equations are singular after regularization".into(),
        })?;
        let b = chol.solve(&w.transpose()).transpose();
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical { dimension: j, message: "non-finite least-squares solution".into() });
        }
        let mut f = b;
        for a in 0..rv {
            let n = f.column(a).norm();
            if n < DROP_NORM {
                self.svalues[a] = 0.0;
                f.column_mut(a).copy_from(&self.factors[j].column(a));
            } else {
                self.svalues[a] = n;
                f.column_mut(a).unscale_mut(n);
            }
        }
        self.cross[j] = gram(u.factor(j), &f);
        self.own[j] = gram(&f, &f);
        self.factors[j] = f;
        Ok(())
    }

    pub(crate) fn sweep(&mut self) -> Result<()> {
        for j in 0..self.target.dims() {
            self.update(j)?;
        }
        Ok(())
    }

    /// Rounding error of [`Self::residual`] squared: the Gram formula
    /// cancels terms as large as `(sum s_U + sum s_V)^2`.
    pub(crate) fn residual_sq_uncertainty(&self) -> f64 {
        let total: f64 = self.target.svalues().iter().sum::<f64>() + self.svalues.iter().sum::<f64>();
        f64::EPSILON * total * total
    }

    /// `||U - V||_F` from cached Gram matrices.
    pub(crate) fn residual(&self) -> f64 {
        let u = self.target;
        let rv = self.rank();
        let mut uv = DMatrix::from_fn(u.rank(), rv, |l, a| u.svalues()[l] * self.svalues[a]);
        let mut vv = DMatrix::from_fn(rv, rv, |a, b| self.svalues[a] * self.svalues[b]);
        for k in 0..u.dims() {
            uv.component_mul_assign(&self.cross[k]);
            vv.component_mul_assign(&self.own[k]);
        }
        (self.target_sq - 2.0 * uv.sum() + vv.sum()).max(0.0).sqrt()
    }

    pub(crate) fn current(&self) -> Ctd {
        Ctd::from_raw(self.target.modes().to_vec(), self.svalues.clone(), self.factors.clone()).renormalize()
    }
}

/// One ALS update of dimension `j` of `v` against `u`, returned renormalized.
pub fn als_sweep(u: &Ctd, v: &Ctd, j: usize, ridge: f64) -> Result<Ctd> {
    if j >= u.dims() {
        return Err(Error::InvalidInput(format!("dimension {j} out of range")));
    }
    let mut fit = AlsFit::new(u, v, ridge)?;
    fit.update(j)?;
    Ok(fit.current())
}

/// Outcome of fitting at one fixed rank.
pub(crate) struct RankFit {
    pub ctd: Ctd,
    pub residual: f64,
    pub sweeps: usize,
    pub met: bool,
}

pub(crate) struct AlsSettings {
    pub tol: f64,
    pub snorm_tol: Option<f64>,
    pub max_sweeps: usize,
    pub stall_tol: f64,
    pub ridge: f64,
}

/// Terms whose normalized inner product exceeds this are treated as copies
/// when choosing starting terms.
const PARALLEL_COSINE: f64 = 0.99;

/// The `r` largest-s-value terms of `u`, passing over terms nearly parallel
/// to one already chosen unless there are too few others.
fn initial_terms(u: &Ctd, r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.rank()).collect();
    order.sort_by(|&a, &b| u.svalues()[b].total_cmp(&u.svalues()[a]));
    let cosine = |a: usize, b: usize| u.factors().iter().fold(1.0, |acc, f| acc * f.column(a).dot(&f.column(b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(r);
    let mut skipped = Vec::new();
    for &l in &order {
        if chosen.len() == r {
            break;
        }
        if chosen.iter().all(|&c| cosine(c, l).abs() < PARALLEL_COSINE) {
            chosen.push(l);
        } else {
            skipped.push(l);
        }
    }
    let missing = r - chosen.len();
    chosen.extend(skipped.into_iter().take(missing));
    chosen
}

/// Fits a rank-`r` CTD to `u`, initialised from [`initial_terms`]. A fit
/// counts as meeting the tolerance only if it does so with the rounding
/// error of the Gram residual added.
pub(crate) fn fit_rank(u: &Ctd, r: usize, settings: &AlsSettings) -> Result<RankFit> {
    let init = u.select_terms(&initial_terms(u, r));
    let mut fit = AlsFit::new(u, &init, settings.ridge)?;
    let tol_sq = settings.tol * settings.tol;
    let meets = |fit: &AlsFit, residual: f64| residual * residual + fit.residual_sq_uncertainty() <= tol_sq;
    let mut residual = fit.residual();
    let mut sweeps = 0;
    let mut met = meets(&fit, residual);
    while !met && sweeps < settings.max_sweeps {
        fit.sweep()?;
        sweeps += 1;
        let next = fit.residual();
        met = meets(&fit, next);
        let stalled = residual > 0.0 && ((residual - next).abs() / residual) < settings.stall_tol;
        residual = next;
        if stalled {
            break;
        }
    }
    let ctd = fit.current();
    if !met {
        if let Some(stol) = settings.snorm_tol {
            met = s_norm(&u.add(&ctd.scale(-1.0))?) <= stol;
        }
    }
    Ok(RankFit { ctd, residual, sweeps, met })
}

pub(crate) struct AlsOutcome {
    /// Smallest-rank fit meeting the tolerance, or the best effort at the cap.
    pub fit: Option<RankFit>,
    pub sweeps: usize,
}

/// Rank search: doubling from 1 until the tolerance is met, then bisection
/// inside the last bracket. Only ranks below `u.rank()` (and within `cap`)
/// are tried.
pub(crate) fn reduce_als(u: &Ctd, cap: Option<usize>, settings: &AlsSettings) -> Result<AlsOutcome> {
    let limit = match cap {
        Some(c) => c.min(u.rank().saturating_sub(1)),
        None => u.rank().saturating_sub(1),
    };
    let mut sweeps = 0;
    if limit == 0 {
        return Ok(AlsOutcome { fit: None, sweeps });
    }
    let mut lo = 0; // largest rank known to fail
    let mut best: Option<RankFit> = None;
    let mut last_failed: Option<RankFit> = None;
    let mut r = 1;
    loop {
        let fit = fit_rank(u, r, settings)?;
        sweeps += fit.sweeps;
        if fit.met {
            best = Some(fit);
            break;
        }
        lo = r;
        last_failed = Some(fit);
        if r == limit {
            break;
        }
        r = (2 * r).min(limit);
    }
    let Some(mut found) = best else {
        // Only a capped search returns a best effort; otherwise the caller
        // keeps the input.
        let capped = cap.is_some_and(|c| c < u.rank());
        return Ok(AlsOutcome { fit: if capped { last_failed } else { None }, sweeps });
    };
    let mut hi = found.ctd.rank().min(r);
    while hi > lo + 1 {
        let mid = lo + (hi - lo) / 2;
        let fit = fit_rank(u, mid, settings)?;
        sweeps += fit.sweeps;
        if fit.met {
            hi = mid;
            found = fit;
        } else {
            lo = mid;
        }
    }
    Ok(AlsOutcome { fit: Some(found), sweeps })
}

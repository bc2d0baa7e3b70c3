//! Interpolative rank reduction: choose a skeleton subset of the input terms
//! by pivoted Cholesky on the term Gram matrix, then refit the skeleton
//! weights by least squares against the full sum.
//!
//! With `t_l = s_l u_1^(l) o ... o u_d^(l)` and `G = [<t_l, t_m>]`, after `k`
//! pivots the Frobenius residual of projecting `sum_l t_l` onto the span of
//! the skeleton is `1^T G 1 - sum_i (1^T L_i)^2`, where `L_i` are the Cholesky
//! columns. That running total decides when to stop; the exact residual
//! then confirms it. Cost is `O(r^2 sum_j M_j + r k^2)`.

use nalgebra::DMatrix;

use crate::ctd::Ctd;
use crate::error::Result;

const DEPENDENT_REL: f64 = 1e3 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SkeletonStatus {
    /// Residual within tolerance.
    Met,
    /// Rank cap reached first.
    Capped,
    /// Every term was selected.
    Full,
    /// Every remaining term is numerically dependent on the pivots while the
    /// residual is still above tolerance.
    Indefinite,
}

#[derive(Clone, Debug)]
pub(crate) struct Skeleton {
    /// Selected term indices in pivot order.
    pub pivots: Vec<usize>,
    /// Least-squares multipliers of the selected terms, in pivot order.
    pub coefficients: Vec<f64>,
    pub residual_sq: f64,
    pub status: SkeletonStatus,
}

/// Diagonal-pivoted Cholesky on a symmetric PSD Gram matrix. Ties in the
/// pivot choice go to the lowest index.
pub(crate) fn pivoted_cholesky_skeleton(gram: &DMatrix<f64>, tol_sq: f64, cap: usize) -> Skeleton {
    let n = gram.nrows();
    let total_sq = gram.sum().max(0.0);
    // A term whose remaining diagonal has dropped to rounding level relative
    // to its own norm lies in the span of the pivots and is never selected.
    let dependent: Vec<f64> = (0..n).map(|i| DEPENDENT_REL * gram[(i, i)]).collect();

    let mut diag: Vec<f64> = (0..n).map(|i| gram[(i, i)]).collect();
    let mut selected = vec![false; n];
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut weights = Vec::new();
    let mut captured = 0.0;
    let residual = |captured: f64| (total_sq - captured).max(0.0);

    let mut exact = f64::INFINITY;
    let mut status = loop {
        if residual(captured) <= tol_sq {
            // The running total loses accuracy when terms are nearly
            // dependent; confirm with the exact residual before stopping.
            exact = exact_residual_sq(gram, &pivots, &solve_coefficients(&columns, &pivots, &weights));
            if exact <= tol_sq {
                break SkeletonStatus::Met;
            }
        }
        if pivots.len() == n {
            break SkeletonStatus::Full;
        }
        if pivots.len() >= cap {
            break SkeletonStatus::Capped;
        }
        let mut p = usize::MAX;
        for i in 0..n {
            if !selected[i] && diag[i] > dependent[i] && (p == usize::MAX || diag[i] > diag[p]) {
                p = i;
            }
        }
        if p == usize::MAX {
            break SkeletonStatus::Indefinite;
        }
        let pivot = diag[p].sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let mut v = gram[(i, p)];
            for c in &columns {
                v -= c[i] * c[p];
            }
            col[i] = v / pivot;
        }
        col[p] = pivot;
        for i in 0..n {
            if !selected[i] {
                diag[i] -= col[i] * col[i];
            }
        }
        selected[p] = true;
        diag[p] = 0.0;
        let w: f64 = col.iter().sum();
        captured += w * w;
        weights.push(w);
        pivots.push(p);
        columns.push(col);
    };

    let coefficients = solve_coefficients(&columns, &pivots, &weights);
    let residual_sq = if status == SkeletonStatus::Met {
        exact
    } else {
        exact_residual_sq(gram, &pivots, &coefficients)
    };
    if status == SkeletonStatus::Indefinite && residual_sq <= tol_sq {
        status = SkeletonStatus::Met;
    }
    Skeleton { pivots, coefficients, residual_sq, status }
}

/// `c = L_S^{-T} w` with `L_S[a][b] = columns[b][pivots[a]]` (lower triangular).
fn solve_coefficients(columns: &[Vec<f64>], pivots: &[usize], weights: &[f64]) -> Vec<f64> {
    let k = pivots.len();
    let mut coefficients = vec![0.0; k];
    for a in (0..k).rev() {
        let mut v = weights[a];
        for b in a + 1..k {
            v -= columns[a][pivots[b]] * coefficients[b];
        }
        coefficients[a] = v / columns[a][pivots[a]];
    }
    coefficients
}

/// `||sum_l t_l - sum_a c_a t_{p_a}||^2 = delta^T G delta` with `delta = 1 - c`
/// on the pivots and 1 elsewhere. Exact dependencies cancel here, unlike in
/// the running total.
fn exact_residual_sq(gram: &DMatrix<f64>, pivots: &[usize], coefficients: &[f64]) -> f64 {
    let n = gram.nrows();
    let mut delta = vec![1.0; n];
    for (&p, &c) in pivots.iter().zip(coefficients) {
        delta[p] = 1.0 - c;
    }
    let mut residual_sq = 0.0;
    for i in 0..n {
        let row: f64 = gram.column(i).iter().zip(&delta).map(|(g, d)| g * d).sum();
        residual_sq += delta[i] * row;
    }
    residual_sq.max(0.0)
}

/// Term Gram matrix of a CTD (s-values included).
pub(crate) fn term_gram(u: &Ctd) -> Result<DMatrix<f64>> {
    u.cross_gram(u)
}

/// Number of terms per block in [`reduce_blocks`].
pub(crate) const BLOCK_SIZE: usize = 256;

/// Reduces consecutive blocks of [`BLOCK_SIZE`] terms independently. Block
/// `c` may use the share `budget * ||U_c|| / sum ||U_c||` of the tolerance.
/// Returns the concatenated result and the sum of the exact block
/// residuals, which bounds its Frobenius distance to `u`.
pub(crate) fn reduce_blocks(u: &Ctd, budget: f64) -> Result<(Ctd, f64)> {
    let n = u.rank();
    let blocks: Vec<Ctd> = (0..n)
        .step_by(BLOCK_SIZE)
        .map(|start| u.select_terms(&(start..(start + BLOCK_SIZE).min(n)).collect::<Vec<_>>()))
        .collect();
    let grams = blocks.iter().map(term_gram).collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = grams.iter().map(|g| g.sum().max(0.0).sqrt()).collect();
    let total: f64 = norms.iter().sum();
    let mut out = Ctd::zero(u.modes())?;
    let mut residual = 0.0;
    for ((block, gram), norm) in blocks.iter().zip(&grams).zip(&norms) {
        let tol = if total > 0.0 { budget * norm / total } else { 0.0 };
        let sk = pivoted_cholesky_skeleton(gram, tol * tol, usize::MAX);
        let piece = if sk.status == SkeletonStatus::Met {
            residual += sk.residual_sq.sqrt();
            skeleton_ctd(block, &sk)
        } else {
            block.clone()
        };
        out = out.add(&piece)?;
    }
    Ok((out, residual))
}

/// Applies a skeleton to `u`: selected terms, reweighted, in ascending
/// term order.
pub(crate) fn skeleton_ctd(u: &Ctd, skeleton: &Skeleton) -> Ctd {
    let mut order: Vec<(usize, f64)> = skeleton
        .pivots
        .iter()
        .zip(&skeleton.coefficients)
        .map(|(&p, &c)| (p, c))
        .collect();
    order.sort_by_key(|&(p, _)| p);
    let terms: Vec<usize> = order.iter().map(|&(p, _)| p).collect();
    let weights: Vec<f64> = order.iter().map(|&(p, c)| c * u.svalues()[p]).collect();
    u.select_terms(&terms).reweighted(&weights)
}

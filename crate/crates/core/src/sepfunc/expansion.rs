//! Sum-of-Gaussians approximation of a decaying exponential.
//!
//! Starting from
//!
//! ```text
//! e^{-beta x} = beta / (2 sqrt(pi)) * int exp(-beta^2 e^{-s} / 4 - x^2 e^{s} - s/2) ds
//! ```
//!
//! the trapezoidal rule with step `h` on a truncated range gives
//! `G(x) = sum_j w_j exp(-x^2 e^{s_j})`. With `beta = b / sqrt(d)`, the Ackley
//! radial term `exp(-b sqrt(|x|^2 / d))` becomes a sum of products of
//! one-dimensional Gaussians.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest term count the parameter search will try.
pub const MAX_TERMS: usize = 10_000;

/// Number of log-spaced probes used while searching for parameters.
const SEARCH_PROBES: usize = 4_000;

/// Number of log-spaced probes for the final certificate.
pub const CERTIFY_PROBES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianExpansion {
    pub b: f64,
    pub d: f64,
    /// Node spacing.
    pub h: f64,
    /// First node; node `j` is `s_start + j h`.
    pub s_start: f64,
    /// Index of the last node (term count minus one).
    pub r: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub x_max: f64,
    /// Sup-error measured by the final certificate on `[delta, x_max]`.
    pub sup_error: f64,
}

impl GaussianExpansion {
    /// An uncertified expansion with explicit parameters.
    pub fn with_parameters(b: f64, d: f64, h: f64, s_start: f64, r: usize) -> Self {
        GaussianExpansion {
            b,
            d,
            h,
            s_start,
            r,
            epsilon: f64::NAN,
            delta: f64::NAN,
            x_max: f64::NAN,
            sup_error: f64::NAN,
        }
    }

    pub fn beta(&self) -> f64 {
        self.b / self.d.sqrt()
    }

    pub fn term_count(&self) -> usize {
        self.r + 1
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.r).map(|j| self.s_start + j as f64 * self.h).collect()
    }

    /// `w_j = h b / (2 sqrt(pi d)) * exp(-b^2 e^{-s_j} / (4 d) - s_j / 2)`.
    pub fn weights(&self) -> Vec<f64> {
        let pre = self.h * self.b / (2.0 * (std::f64::consts::PI * self.d).sqrt());
        let q = self.b * self.b / (4.0 * self.d);
        self.nodes().iter().map(|&s| pre * (-q * (-s).exp() - 0.5 * s).exp()).collect()
    }

    /// Gaussian rates `e^{s_j}`; term `j` is `w_j exp(-rate_j x^2)`.
    pub fn rates(&self) -> Vec<f64> {
        self.nodes().iter().map(|s| s.exp()).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        self.weights().iter().zip(self.rates()).map(|(w, a)| w * (-a * x2).exp()).sum()
    }

    /// `e^{-beta x}`, the function being approximated.
    pub fn target(&self, x: f64) -> f64 {
        (-self.beta() * x).exp()
    }
}

/// `n` log-spaced points spanning `[lo, hi]`.
pub fn log_probes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Largest `|G(x) - e^{-beta x}|` over the probes.
pub fn certify_expansion(g: &GaussianExpansion, probes: &[f64]) -> f64 {
    let w = g.weights();
    let a = g.rates();
    let beta = g.beta();
    probes
        .iter()
        .map(|&x| {
            let x2 = x * x;
            let approx: f64 = w.iter().zip(&a).map(|(w, a)| w * (-a * x2).exp()).sum();
            (approx - (-beta * x).exp()).abs()
        })
        .fold(0.0, f64::max)
}

fn span(h: f64, lo: f64, hi: f64) -> (f64, usize) {
    let r = ((hi - lo) / h).ceil().max(0.0) as usize;
    (lo, r)
}

/// Finds `h`, `s_start` and `R` so that the expansion is within `eps` of
/// `exp(-(b / sqrt(d)) x)` on `[delta, x_max]`.
///
/// The node range starts from tail estimates (the integrand is below
/// `eps` outside it), is widened while certification fails, and is then
/// trimmed term by term from both ends. If widening does not help, `h` is
/// halved, starting from `h = 1`.
pub fn build_gaussian_expansion(b: f64, d: f64, eps: f64, delta: f64, x_max: f64) -> Result<GaussianExpansion> {
    if !(b > 0.0 && d > 0.0) {
        return Err(Error::Domain(format!("need b > 0 and d > 0, got b = {b}, d = {d}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("need 0 < eps < 1, got {eps}")));
    }
    if !(delta > 0.0 && x_max > delta) {
        return Err(Error::Domain(format!("need 0 < delta < x_max, got [{delta}, {x_max}]")));
    }
    let beta = b / d.sqrt();
    let log_eps = -eps.ln() + 5.0;
    let s_lo = (beta * beta / (4.0 * log_eps)).ln();
    let s_hi = (log_eps / (delta * delta)).ln();
    let search_probes = log_probes(delta, x_max, SEARCH_PROBES);
    let final_probes = log_probes(delta, x_max, CERTIFY_PROBES);

    let mut margin = 0.9;
    let mut h = 1.0;
    while ((s_hi - s_lo) / h) < MAX_TERMS as f64 {
        let target = margin * eps;
        let mut found = None;
        for widen in 0..4 {
            let (start, r) = span(h, s_lo - 2.0 * widen as f64, s_hi + 2.0 * widen as f64);
            let g = GaussianExpansion::with_parameters(b, d, h, start, r);
            if certify_expansion(&g, &search_probes) <= target {
                found = Some(g);
                break;
            }
        }
        let Some(mut g) = found else {
            h *= 0.5;
            continue;
        };
        while g.r > 0 {
            let trial = GaussianExpansion { s_start: g.s_start + h, r: g.r - 1, ..g.clone() };
            if certify_expansion(&trial, &search_probes) > target {
                break;
            }
            g = trial;
        }
        while g.r > 0 {
            let trial = GaussianExpansion { r: g.r - 1, ..g.clone() };
            if certify_expansion(&trial, &search_probes) > target {
                break;
            }
            g = trial;
        }
        let sup = certify_expansion(&g, &final_probes);
        if sup <= eps {
            return Ok(GaussianExpansion { epsilon: eps, delta, x_max, sup_error: sup, ..g });
        }
        // The sparse probe set missed a peak; ask for more headroom.
        margin *= 0.5;
        if margin < 1e-3 {
            break;
        }
    }
    Err(Error::Expansion(format!(
        "no expansion with at most {MAX_TERMS} terms reaches {eps:e} on [{delta:e}, {x_max}]"
    )))
}

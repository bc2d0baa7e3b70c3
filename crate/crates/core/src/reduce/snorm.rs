//! Best rank-one approximation by alternating updates, and the s-norm built on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ctd::Ctd;

const MAX_SWEEPS: usize = 500;
const REL_TOL: f64 = 1e-14;

/// A rank-one separated approximation `svalue * v_1 o ... o v_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneApprox {
    pub svalue: f64,
    pub factors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

impl RankOneApprox {
    pub fn to_ctd(&self, modes: &[usize]) -> Ctd {
        let factors = self
            .factors
            .iter()
            .map(|v| DMatrix::from_column_slice(v.len(), 1, v))
            .collect();
        Ctd::from_raw(modes.to_vec(), vec![self.svalue], factors)
    }
}

/// Rank-one ALS started from the term with the largest s-value. Stops when
/// the s-value changes by less than `1e-14` relative or after 500 sweeps.
///
/// The result is a stationary point; it is not guaranteed to be the global
/// best rank-one approximation.
pub fn rank_one_approx(u: &Ctd) -> RankOneApprox {
    let d = u.dims();
    if u.is_zero() {
        return RankOneApprox {
            svalue: 0.0,
            factors: u.modes().iter().map(|&m| vec![0.0; m]).collect(),
            sweeps: 0,
        };
    }
    let start = u
        .svalues()
        .iter()
        .enumerate()
        .fold(0, |best, (l, &s)| if s > u.svalues()[best] { l } else { best });
    let mut v: Vec<DVector<f64>> = (0..d).map(|j| u.factor(j).column(start).into_owned()).collect();
    // proj[j][l] = <u_j^(l), v_j>
    let mut proj: Vec<DVector<f64>> = (0..d).map(|j| u.factor(j).tr_mul(&v[j])).collect();
    let mut sigma = 0.0_f64;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let previous = sigma;
        for j in 0..d {
            let weights = DVector::from_fn(u.rank(), |l, _| {
                (0..d)
                    .filter(|&k| k != j)
                    .fold(u.svalues()[l], |acc, k| acc * proj[k][l])
            });
            let b = u.factor(j) * weights;
            let n = b.norm();
            if n == 0.0 {
                return RankOneApprox {
                    svalue: 0.0,
                    factors: v.iter().map(|x| x.as_slice().to_vec()).collect(),
                    sweeps,
                };
            }
            sigma = n;
            v[j] = b / n;
            proj[j] = u.factor(j).tr_mul(&v[j]);
        }
        if (sigma - previous).abs() <= REL_TOL * sigma {
            break;
        }
    }
    RankOneApprox {
        svalue: sigma,
        factors: v.iter().map(|x| x.as_slice().to_vec()).collect(),
        sweeps,
    }
}

/// Largest s-value of the rank-one separated approximation.
pub fn s_norm(u: &Ctd) -> f64 {
    rank_one_approx(u).svalue
}

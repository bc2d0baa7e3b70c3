//! Compass (coordinate pattern) search for a local maximum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompassConfig {
    pub step0: f64,
    pub shrink: f64,
    pub tol: f64,
    pub max_evaluations: usize,
}

impl Default for CompassConfig {
    fn default() -> Self {
        CompassConfig { step0: 1e-2, shrink: 0.5, tol: 1e-10, max_evaluations: 1_000_000 }
    }
}

impl CompassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step0 > 0.0 && self.tol > 0.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidConfig("compass search needs step0 > 0, tol > 0 and 0 < shrink < 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompassResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Value after every accepted move, starting with the value at `x0`.
    pub accepted: Vec<f64>,
    pub final_step: f64,
}

/// Maximizes `f` from `x0` by probing `x +- step e_i` in cyclic order,
/// moving to the first improvement and shrinking the step when none of the
/// `2d` probes improves. Stops when the step drops below `tol` or the
/// evaluation budget runs out.
pub fn compass_search<F>(f: F, x0: &[f64], cfg: &CompassConfig) -> Result<CompassResult>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut value = f(&x);
    let mut evaluations = 1;
    let mut accepted = vec![value];
    let mut step = cfg.step0;
    let d = x.len();
    let mut next_dir = 0;
    while step >= cfg.tol && evaluations < cfg.max_evaluations {
        let mut moved = false;
        for t in 0..2 * d {
            let dir = (next_dir + t) % (2 * d);
            let (i, sign) = (dir / 2, if dir % 2 == 0 { 1.0 } else { -1.0 });
            let old = x[i];
            x[i] = old + sign * step;
            let v = f(&x);
            evaluations += 1;
            if v > value {
                value = v;
                accepted.push(v);
                next_dir = dir;
                moved = true;
                break;
            }
            x[i] = old;
            if evaluations >= cfg.max_evaluations {
                break;
            }
        }
        if !moved {
            step *= cfg.shrink;
        }
    }
    Ok(CompassResult { point: x, value, evaluations, accepted, final_step: step })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let p = [0.3, -1.2, 2.0];
        let f = |x: &[f64]| -x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let cfg = CompassConfig { step0: 0.5, tol: 1e-9, ..Default::default() };
        let r = compass_search(f, &[0.0, 0.0, 0.0], &cfg).unwrap();
        for (a, b) in r.point.iter().zip(&p) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
        assert!(r.accepted.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stationary_start_only_shrinks() {
        let cfg = CompassConfig { step0: 1.0, tol: 1e-3, ..Default::default() };
        let r = compass_search(|x: &[f64]| -x[0].abs(), &[0.0], &cfg).unwrap();
        assert_eq!(r.point, vec![0.0]);
        assert_eq!(r.accepted.len(), 1);
        assert!(r.final_step < 1e-3);
    }

    #[test]
    fn budget_is_respected() {
        let cfg = CompassConfig { step0: 1e-6, tol: 1e-12, max_evaluations: 50, ..Default::default() };
        let r = compass_search(|x: &[f64]| x[0], &[0.0], &cfg).unwrap();
        assert!(r.evaluations <= 50);
    }
}

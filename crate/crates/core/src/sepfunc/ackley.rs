//! The Ackley test function, its separated representation, and its grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sepfunc::expansion::GaussianExpansion;
use crate::sepfunc::grid::{build_cosine_grid, build_radial_grid, cosine_spacing, crossover_radius, merge_grids, Grid};
use crate::sepfunc::{SeparatedFunction, SeparatedTerm, Univariate};

/// `u(x) = a exp(-b sqrt(|x|^2 / d)) + exp(sum_i cos(c x_i) / d)`, maximal at
/// the origin with value `a + e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AckleyParams {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for AckleyParams {
    fn default() -> Self {
        AckleyParams { d: 10, a: 20.0, b: 0.2, c: 2.0 * std::f64::consts::PI }
    }
}

impl AckleyParams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !(self.a > 0.0 && self.b > 0.0 && self.c > 0.0) {
            return Err(Error::InvalidConfig("Ackley parameters need d >= 1 and a, b, c > 0".into()));
        }
        Ok(())
    }

    pub fn max_value(&self) -> f64 {
        self.a + std::f64::consts::E
    }
}

pub fn ackley(p: &AckleyParams, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let cos: f64 = x.iter().map(|v| (p.c * v).cos()).sum();
    p.a * (-p.b * (r2 / d).sqrt()).exp() + (cos / d).exp()
}

/// Gradient of [`ackley`]. The radial term is not differentiable at the
/// origin; its contribution is taken as zero there.
pub fn ackley_gradient(p: &AckleyParams, x: &[f64]) -> Vec<f64> {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let rho = (r2 / d).sqrt();
    let radial = p.a * (-p.b * rho).exp();
    let cosine = (x.iter().map(|v| (p.c * v).cos()).sum::<f64>() / d).exp();
    x.iter()
        .map(|&xi| {
            let from_radial = if rho > 0.0 { -radial * p.b * xi / (d * rho) } else { 0.0 };
            from_radial - cosine * p.c * (p.c * xi).sin() / d
        })
        .collect()
}

/// The Ackley function as `R + 2` separated terms: `a w_j prod_i
/// exp(-e^{s_j} (x_i - m_i)^2)` for each Gaussian, and `prod_i exp(cos(c
/// (x_i - m_i)) / d)`. `center` (`m`, default the origin) moves the maximum.
pub fn ackley_separated(p: &AckleyParams, g: &GaussianExpansion, center: Option<&[f64]>) -> Result<SeparatedFunction> {
    p.validate()?;
    let origin = vec![0.0; p.d];
    let m = center.unwrap_or(&origin);
    if m.len() != p.d {
        return Err(Error::Shape(format!("center of length {} for d = {}", m.len(), p.d)));
    }
    let mut terms: Vec<SeparatedTerm> = g
        .weights()
        .iter()
        .zip(g.rates())
        .map(|(&w, rate)| SeparatedTerm {
            weight: p.a * w,
            factors: m.iter().map(|&c| Univariate::Gaussian { rate, center: c }).collect(),
        })
        .collect();
    terms.push(SeparatedTerm {
        weight: 1.0,
        factors: m
            .iter()
            .map(|&c| Univariate::ExpCosine { amplitude: 1.0 / p.d as f64, frequency: p.c, center: c })
            .collect(),
    });
    SeparatedFunction::new(p.d, terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AckleyGridConfig {
    /// The box is `[-half_width, half_width]^d` around the center.
    pub half_width: f64,
    pub points_per_gaussian: usize,
    pub samples_per_oscillation: usize,
}

impl Default for AckleyGridConfig {
    fn default() -> Self {
        AckleyGridConfig { half_width: 1.0, points_per_gaussian: 10, samples_per_oscillation: 16 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AckleyGrid {
    pub grid: Grid,
    /// Points per dimension from the Gaussian stencils (whole line).
    pub radial_points: usize,
    /// Points per dimension of the cosine lattice over the box.
    pub cosine_points: usize,
    /// Radial points kept plus cosine points used, before merging duplicates.
    pub points_before_dedup: usize,
    /// Points per dimension after merging.
    pub points: usize,
    pub crossover_radius: f64,
    /// Smallest nonzero `|x|` over the points of the grid, times `sqrt(d)`.
    pub innermost_radius: f64,
}

/// The per-dimension grid for the Ackley function: Gaussian stencils near
/// the center, the cosine lattice beyond the crossover radius.
pub fn ackley_grid(p: &AckleyParams, g: &GaussianExpansion, cfg: &AckleyGridConfig, center: Option<&[f64]>) -> Result<AckleyGrid> {
    p.validate()?;
    if !(cfg.half_width > 0.0) {
        return Err(Error::InvalidConfig("grid half width must be positive".into()));
    }
    let hw = cfg.half_width;
    let radial = build_radial_grid(g, cfg.points_per_gaussian);
    let cosine = build_cosine_grid(p.c, -hw, hw, cfg.samples_per_oscillation)?;
    let spacing = cosine_spacing(p.c, cfg.samples_per_oscillation);
    let radius = crossover_radius(&radial, spacing);
    let merged = merge_grids(&radial, &cosine);
    let kept_radial = radial.iter().filter(|x| x.abs() <= radius && x.abs() <= hw).count();
    let reach = radial
        .iter()
        .filter(|x| x.abs() <= radius && x.abs() <= hw)
        .fold(f64::NEG_INFINITY, |m, x| m.max(x.abs()));
    let used_cosine = cosine.iter().filter(|x| x.abs() > reach).count();
    let innermost = merged.iter().filter(|x| **x != 0.0).fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let points = merged.len();
    let base = Grid::isotropic(merged, p.d, -hw, hw)?;
    let grid = match center {
        Some(m) => base.shifted(m)?,
        None => base,
    };
    Ok(AckleyGrid {
        grid,
        radial_points: radial.len(),
        cosine_points: cosine.len(),
        points_before_dedup: kept_radial + used_cosine,
        points,
        crossover_radius: radius,
        innermost_radius: innermost * (p.d as f64).sqrt(),
    })
}

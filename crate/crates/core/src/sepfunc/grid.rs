//! Tensor-product sampling grids.

use serde::{Deserialize, Serialize};

use crate::ctd::MultiIndex;
use crate::error::{Error, Result};
use crate::sepfunc::expansion::GaussianExpansion;

/// Points closer than this are merged.
pub const DEDUP_TOL: f64 = 1e-12;

/// Half-width of the canonical stencil for `e^{-x^2}`.
pub const STENCIL_HALF_WIDTH: f64 = 3.0;

/// Per-dimension strictly increasing coordinates inside a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    coords: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Grid {
    pub fn new(coords: Vec<Vec<f64>>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = coords.len();
        if d == 0 || lower.len() != d || upper.len() != d {
            return Err(Error::Shape(format!(
                "{d} coordinate lists with {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (j, c) in coords.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::InvalidInput(format!("dimension {j} has no points")));
            }
            if !(lower[j] <= upper[j]) {
                return Err(Error::InvalidInput(format!("dimension {j}: empty box")));
            }
            if c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidInput(format!("dimension {j}: coordinates not strictly increasing")));
            }
            if c[0] < lower[j] || c[c.len() - 1] > upper[j] {
                return Err(Error::InvalidInput(format!("dimension {j}: coordinates leave the box")));
            }
        }
        Ok(Grid { coords, lower, upper })
    }

    /// The same coordinates in every one of `d` dimensions.
    pub fn isotropic(coords: Vec<f64>, d: usize, lower: f64, upper: f64) -> Result<Self> {
        Grid::new(vec![coords; d], vec![lower; d], vec![upper; d])
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn modes(&self) -> Vec<usize> {
        self.coords.iter().map(Vec::len).collect()
    }

    pub fn coords(&self, j: usize) -> &[f64] {
        &self.coords[j]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Translates every coordinate and the box by `offset`.
    pub fn shifted(&self, offset: &[f64]) -> Result<Grid> {
        if offset.len() != self.dims() {
            return Err(Error::Shape(format!("offset of length {} for {} dimensions", offset.len(), self.dims())));
        }
        let coords = self
            .coords
            .iter()
            .zip(offset)
            .map(|(c, o)| c.iter().map(|x| x + o).collect())
            .collect();
        let lower = self.lower.iter().zip(offset).map(|(x, o)| x + o).collect();
        let upper = self.upper.iter().zip(offset).map(|(x, o)| x + o).collect();
        Grid::new(coords, lower, upper)
    }

    /// The point of the grid with the given index.
    pub fn point(&self, index: &MultiIndex) -> Result<Vec<f64>> {
        index_to_point(self, index)
    }
}

pub fn index_to_point(grid: &Grid, index: &MultiIndex) -> Result<Vec<f64>> {
    if index.dims() != grid.dims() || index.as_slice().iter().zip(&grid.coords).any(|(&i, c)| i >= c.len()) {
        return Err(Error::IndexOutOfRange { index: index.as_slice().to_vec(), modes: grid.modes() });
    }
    Ok(index.as_slice().iter().zip(&grid.coords).map(|(&i, c)| c[i]).collect())
}

/// `n` equally spaced points on `[-STENCIL_HALF_WIDTH, STENCIL_HALF_WIDTH]`,
/// exactly symmetric about zero.
fn canonical_stencil(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    let step = 2.0 * STENCIL_HALF_WIDTH / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|k| -STENCIL_HALF_WIDTH + k as f64 * step).collect();
    for k in 0..n / 2 {
        out[n - 1 - k] = -out[k];
    }
    if n % 2 == 1 {
        out[n / 2] = 0.0;
    }
    out
}

/// Points sampling every Gaussian of the expansion at its own width.
///
/// Gaussians are visited from the sharpest (largest rate) outward. Each
/// contributes the canonical stencil scaled by `e^{-s_j / 2}`, keeping only
/// points strictly beyond the radius already covered.
pub fn build_radial_grid(g: &GaussianExpansion, points_per_gaussian: usize) -> Vec<f64> {
    let stencil = canonical_stencil(points_per_gaussian.max(1));
    let mut nodes = g.nodes();
    nodes.sort_by(|a, b| b.total_cmp(a));
    let mut covered = 0.0_f64;
    let mut positive = Vec::new();
    let mut has_zero = false;
    for s in nodes {
        let scale = (-0.5 * s).exp();
        let mut reach = covered;
        for &p in &stencil {
            let x = p * scale;
            if x == 0.0 {
                has_zero = true;
            } else if x > covered {
                positive.push(x);
            }
            reach = reach.max(x.abs());
        }
        covered = reach;
    }
    positive.sort_by(f64::total_cmp);
    positive.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
    let mut out: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
    if has_zero {
        out.push(0.0);
    }
    out.extend(&positive);
    out
}

/// Uniform points `k * spacing` inside `[lower, upper]`, with spacing
/// `(2 pi / c) / samples_per_oscillation`. The lattice is anchored at zero.
pub fn build_cosine_grid(c: f64, lower: f64, upper: f64, samples_per_oscillation: usize) -> Result<Vec<f64>> {
    if !(c > 0.0) || samples_per_oscillation == 0 || !(lower <= upper) {
        return Err(Error::InvalidInput("cosine grid needs c > 0, samples > 0 and a nonempty box".into()));
    }
    let h = cosine_spacing(c, samples_per_oscillation);
    let first = (lower / h - 1e-9).ceil() as i64;
    let last = (upper / h + 1e-9).floor() as i64;
    Ok((first..=last).map(|k| (k as f64 * h).clamp(lower, upper)).collect())
}

pub fn cosine_spacing(c: f64, samples_per_oscillation: usize) -> f64 {
    2.0 * std::f64::consts::PI / c / samples_per_oscillation as f64
}

/// Radius up to which radial points are kept by [`merge_grids`].
///
/// Walking outward over the nonnegative radial points, this is the last
/// radius before the first gap wider than the cosine spacing (the gap
/// across the origin counts). `INFINITY` if no gap is that wide.
pub fn crossover_radius(radial: &[f64], cosine_spacing: f64) -> f64 {
    let mut positive: Vec<f64> = radial.iter().filter(|&&x| x > 0.0).copied().collect();
    positive.sort_by(f64::total_cmp);
    let has_zero = radial.contains(&0.0);
    let Some(&first) = positive.first() else {
        return if has_zero { 0.0 } else { f64::NEG_INFINITY };
    };
    let first_gap = if has_zero { first } else { 2.0 * first };
    if first_gap > cosine_spacing {
        return if has_zero { 0.0 } else { f64::NEG_INFINITY };
    }
    for w in positive.windows(2) {
        if w[1] - w[0] > cosine_spacing {
            return w[0];
        }
    }
    f64::INFINITY
}

/// Radial points where they are finer than the cosine lattice, cosine points
/// elsewhere. `cosine` is expected to span the box; radial points outside
/// its range are dropped.
pub fn merge_grids(radial: &[f64], cosine: &[f64]) -> Vec<f64> {
    if cosine.is_empty() {
        let mut out = radial.to_vec();
        out.sort_by(f64::total_cmp);
        return out;
    }
    let spacing = if cosine.len() > 1 { cosine[1] - cosine[0] } else { f64::INFINITY };
    let radius = crossover_radius(radial, spacing);
    let (lo, hi) = (cosine[0], cosine[cosine.len() - 1]);
    // The last radial point kept on each side decides where cosine points resume.
    let mut out: Vec<f64> = radial.iter().copied().filter(|x| x.abs() <= radius && *x >= lo && *x <= hi).collect();
    if out.is_empty() {
        return cosine.to_vec();
    }
    // Cosine points resume beyond the outermost radial point kept on each side.
    let reach_hi = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reach_lo = out.iter().copied().fold(f64::INFINITY, f64::min);
    out.extend(cosine.iter().copied().filter(|&x| x > reach_hi || x < reach_lo));
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= DEDUP_TOL);
    out
}

//! Separated representations of multivariate functions and the pipeline
//! that finds their global maximum through a CTD.
//!
//! A [`SeparatedFunction`] is `sum_l s_l prod_j u_j^(l)(x_j)`. Sampling it on
//! a tensor-product [`Grid`] gives a CTD of the same rank. The CTD is
//! reduced, its largest entry located by the squaring iteration, and the
//! corresponding grid point refined on the exact function by compass search.

mod ackley;
mod compass;
mod expansion;
mod grid;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ctd::{Ctd, MultiIndex};
use crate::error::{Error, Result};
use crate::maxentry::{search, MaxEntrySearchConfig, MaxEntryTrace};
use crate::reduce::{reduce, ReductionConfig, ReductionMeta};

pub use ackley::{
    ackley, ackley_gradient, ackley_grid, ackley_separated, AckleyGrid, AckleyGridConfig, AckleyParams,
};
pub use compass::{compass_search, CompassConfig, CompassResult};
pub use expansion::{
    build_gaussian_expansion, certify_expansion, log_probes, GaussianExpansion, CERTIFY_PROBES, MAX_TERMS,
};
pub use grid::{
    build_cosine_grid, build_radial_grid, cosine_spacing, crossover_radius, index_to_point, merge_grids, Grid,
    DEDUP_TOL, STENCIL_HALF_WIDTH,
};

/// A function of one variable used as a factor of a separated term.
#[derive(Clone)]
pub enum Univariate {
    Constant(f64),
    /// `exp(-rate (x - center)^2)`.
    Gaussian { rate: f64, center: f64 },
    /// `exp(amplitude cos(frequency (x - center)))`.
    ExpCosine { amplitude: f64, frequency: f64, center: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Univariate {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Univariate::Constant(c) => *c,
            Univariate::Gaussian { rate, center } => (-rate * (x - center) * (x - center)).exp(),
            Univariate::ExpCosine { amplitude, frequency, center } => (amplitude * (frequency * (x - center)).cos()).exp(),
            Univariate::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Univariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Univariate::Constant(c) => write!(f, "Constant({c})"),
            Univariate::Gaussian { rate, center } => write!(f, "Gaussian {{ rate: {rate}, center: {center} }}"),
            Univariate::ExpCosine { amplitude, frequency, center } => {
                write!(f, "ExpCosine {{ amplitude: {amplitude}, frequency: {frequency}, center: {center} }}")
            }
            Univariate::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeparatedTerm {
    pub weight: f64,
    pub factors: Vec<Univariate>,
}

#[derive(Clone, Debug)]
pub struct SeparatedFunction {
    dims: usize,
    terms: Vec<SeparatedTerm>,
}

impl SeparatedFunction {
    pub fn new(dims: usize, terms: Vec<SeparatedTerm>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::Shape("a separated function needs at least one variable".into()));
        }
        if let Some(l) = terms.iter().position(|t| t.factors.len() != dims) {
            return Err(Error::Shape(format!("term {l} has {} factors for {dims} variables", terms[l].factors.len())));
        }
        Ok(SeparatedFunction { dims, terms })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[SeparatedTerm] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.factors.iter().zip(x).fold(t.weight, |acc, (u, &xj)| acc * u.eval(xj)))
            .sum()
    }
}

/// Samples every univariate factor on the grid. Column norms move into the
/// s-values; terms that vanish on the grid are dropped.
pub fn sample_to_ctd(f: &SeparatedFunction, grid: &Grid) -> Result<Ctd> {
    if grid.dims() != f.dims() {
        return Err(Error::Shape(format!("{}-dimensional grid for a {}-variable function", grid.dims(), f.dims())));
    }
    let r = f.rank();
    let factors: Vec<DMatrix<f64>> = (0..f.dims())
        .map(|j| {
            let xs = grid.coords(j);
            DMatrix::from_fn(xs.len(), r, |i, l| f.terms[l].factors[j].eval(xs[i]))
        })
        .collect();
    let svalues = f.terms.iter().map(|t| t.weight).collect();
    Ctd::from_parts(grid.modes(), svalues, factors)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// Reduction applied once to the sampled tensor.
    pub initial_reduction: ReductionConfig,
    pub search: MaxEntrySearchConfig,
    pub compass: CompassConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            initial_reduction: ReductionConfig::default(),
            search: MaxEntrySearchConfig::default(),
            compass: CompassConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointCandidate {
    pub index: MultiIndex,
    pub point: Vec<f64>,
    /// Entry of the reduced tensor at `index`.
    pub tensor_value: f64,
    /// Objective at `point`.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeReport {
    pub modes: Vec<usize>,
    pub initial_rank: usize,
    pub reduced_rank: usize,
    pub initial_reduction: ReductionMeta,
    pub search_iterations: usize,
    pub search_final_rank: usize,
    /// Candidates from the final iterate, best objective value first.
    pub candidates: Vec<PointCandidate>,
    pub refined: CompassResult,
    pub trace: MaxEntryTrace,
}

impl OptimizeReport {
    /// The tensor-stage answer (the candidate the refinement started from).
    pub fn tensor_stage(&self) -> &PointCandidate {
        &self.candidates[0]
    }
}

/// Sample, reduce, search, and refine. `objective` is the exact function
/// used for candidate ranking and compass search; `None` means `f` itself.
pub fn optimize_function(
    f: &SeparatedFunction,
    grid: &Grid,
    cfg: &OptimizeConfig,
    objective: Option<&(dyn Fn(&[f64]) -> f64 + Sync)>,
) -> Result<OptimizeReport> {
    cfg.compass.validate()?;
    let exact = |x: &[f64]| match objective {
        Some(g) => g(x),
        None => f.eval(x),
    };
    let sampled = sample_to_ctd(f, grid)?;
    let reduction = reduce(&sampled, &cfg.initial_reduction)?;
    let trace = search(&reduction.ctd, &cfg.search)?;
    let mut candidates = trace
        .candidates
        .iter()
        .map(|c| {
            let point = index_to_point(grid, &c.index)?;
            let value = exact(&point);
            Ok(PointCandidate { index: c.index.clone(), point, tensor_value: c.value, value })
        })
        .collect::<Result<Vec<_>>>()?;
    if candidates.is_empty() {
        return Err(Error::DegenerateIterate { iteration: trace.iteration_count(), message: "no candidates".into() });
    }
    candidates.sort_by(|a, b| b.value.total_cmp(&a.value));
    let refined = compass_search(exact, &candidates[0].point, &cfg.compass)?;
    Ok(OptimizeReport {
        modes: grid.modes(),
        initial_rank: sampled.rank(),
        reduced_rank: reduction.ctd.rank(),
        initial_reduction: reduction.meta,
        search_iterations: trace.iteration_count(),
        search_final_rank: trace.final_iterate.rank(),
        candidates,
        refined,
        trace,
    })
}

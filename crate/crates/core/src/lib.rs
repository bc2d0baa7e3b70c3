//! Canonical tensor decompositions (CTDs), separation-rank reduction, and
//! search for maximal-magnitude entries by repeated Hadamard squaring.
//!
//! The crate is organised bottom-up:
//!
//! * [`ctd`]: the CTD type and its exact algebra;
//! * [`reduce`]: rank reduction (interpolative skeletons and ALS) and the s-norm;
//! * [`maxentry`]: power-method and squaring searches for the largest entries;
//! * [`sepfunc`]: separated representations of functions, sampling grids,
//!   and the Ackley optimization pipeline;
//! * [`experiments`]: seeded experiment drivers used by the CLI.

pub mod ctd;
pub mod error;
pub mod experiments;
pub mod io;
pub mod maxentry;
pub mod reduce;
pub mod sepfunc;

pub use ctd::{random_ctd, spike_ctd, Ctd, DenseTensor, MultiIndex};
pub use error::{Error, Result};

//! Relativistic flash-collapse model with interaction on a 1+1-dimensional
//! Minkowski lattice.
//!
//! - [`lattice`]: events, cuts, hyperboloids.
//! - [`quantum`]: configuration spaces and operators.
//! - [`evolution`]: the brick-wall circuit and evolution between cuts.
//! - [`cells`]: 4-cells, 3-cells and admissible sequences.
//! - [`collapse`]: profiles, collapse operators, the density `D`.
//! - [`model`]: joint distribution, sampling, conditioning, reference models.
//! - [`cli`]: the experiment runner.

pub mod cells;
pub mod cli;
pub mod collapse;
pub mod error;
pub mod evolution;
pub mod lattice;
pub mod model;
pub mod quantum;

pub use error::{Error, Result};

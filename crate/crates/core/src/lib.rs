//! Deterministic solver for the spatially homogeneous Landau equation with
//! soft potentials, together with a harness that evaluates explicit
//! a-priori constants and checks the associated estimates on trajectories.

pub mod bench;
pub mod coercivity;
pub mod convolution;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod kernel;
pub mod ledger;
pub mod linalg;
pub mod solver;
pub mod state;

pub use error::{LandauError, Result};

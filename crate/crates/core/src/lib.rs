//! Reconstruction of a boundary `b(t)` from the first-passage-time density of
//! a standard Wiener process through it.
//!
//! Two inverse solvers are provided: [`plmc`] builds a piecewise-linear
//! boundary segment by segment, matching crossing masses estimated from
//! weighted Monte Carlo paths; [`vie`] solves a discretized Volterra integral
//! equation knot by knot. The [`direct`] solvers go the other way and serve
//! as oracles.

pub mod bench;
pub mod boundaries;
pub mod bridge;
pub mod densities;
pub mod direct;
pub mod error;
pub mod numerics;
pub mod plmc;
pub mod vie;

pub use error::{Error, Result};

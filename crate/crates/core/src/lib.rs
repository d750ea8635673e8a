//! Nonlinear shallow water flow around a fixed, partially immersed obstacle.
//!
//! The fluid under the obstacle is reduced to a boundary operator acting on a
//! scalar trace living on the contact curve: the Dirichlet-to-Neumann map of
//! the weighted Laplacian `div(h_i grad)`. The exterior flow is advanced with a
//! finite-volume scheme on a body-fitted annular mesh, and the trace follows a
//! Bernoulli-type ODE.

pub mod compat;
pub mod diagnostics;
pub mod error;
pub mod exterior;
pub mod geometry;
pub mod interior;
pub mod io;
pub mod mesh;
pub mod scenario;
pub mod swe;
pub mod trace;

pub use error::{Error, Result};

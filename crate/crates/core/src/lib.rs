//! Image restoration under the smoothed minimal-surface energy
//!
//! ```text
//! E(u) = λ/2 ‖Ku − f‖² + Σ √(α + |∇u|²)
//! ```
//!
//! on a periodic lattice, where `K` is a circulant (Gaussian) blur or the
//! identity. Three solvers are provided: a first-order primal-dual scheme
//! with an exact FFT primal step, explicit time marching, and the lagged
//! diffusivity fixed point with conjugate-gradient inner solves.
//!
//! Axis convention: the "x" difference runs along the first (row) index `i`,
//! the "y" difference along the second (column) index `j`. Grids are stored
//! row-major with `height` rows of `width` samples.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod degrade;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solvers;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use grid::{DualField, ImageGrid};
pub use model::{ModelParams, StopRule};
pub use solvers::{DualUpdate, Method, SolveReport, SolverConfig};
pub use spectral::{BlurSpec, Spectrum};

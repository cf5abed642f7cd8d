//! Level set reconstruction of binary inclusions for the 2D inverse
//! potential problem `Δv = χ_D`, with tools that cross-check level set
//! derivatives against shape derivatives built from single layer potentials.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod elliptic;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod levelset;
pub mod projection;
pub mod shapederiv;

pub use elliptic::{SolverConfig, SolverMethod};
pub use error::{Error, Result};
pub use geometry::{CurveSet, Polyline};
pub use grid::{GridSpec, ScalarField};
pub use harness::{ExperimentConfig, Shape};
pub use levelset::{EvolutionConfig, Method};
pub use projection::SmoothingParam;

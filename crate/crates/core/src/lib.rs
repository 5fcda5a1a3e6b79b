//! Continuification-based shepherding of large swarms on the periodic square
//! `Ω = [-π, π)²`.
//!
//! A population of passive *targets* diffuses on the torus and is repelled by
//! a smaller population of actively controlled *herders*. This crate
//! computes how many herders are needed to confine the targets to a circular
//! goal region, synthesizes the herders' macroscopic velocity field by a
//! spectral Poisson solve, and runs both the agent-based system and its
//! continuum (PDE) counterpart.
//!
//! The building blocks, bottom-up:
//!
//! - [`geometry`]: wrapped points, displacements and distances on the torus.
//! - [`kernel`]: the soft-core repulsive kernel and its periodization.
//! - [`grid`]: uniform periodic grids, FFT-based convolution, spectral
//!   differential operators and the Poisson solver.
//! - [`kde`]: periodic Gaussian density estimation from agent positions.
//! - [`feasibility`]: desired densities, numerical deconvolution, minimal
//!   herder mass and herder count.
//! - [`controller`]: density error, potential, flux and per-herder commands.
//! - [`micro`]: Euler–Maruyama simulation of the agents.
//! - [`continuum`]: RK4 integration of the density PDEs.
//! - [`cli`]: experiment configuration, file formats and the batch commands
//!   behind the `shepherd` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod continuum;
pub mod controller;
mod error;
pub mod feasibility;
pub mod geometry;
pub mod grid;
pub mod kde;
pub mod kernel;
pub mod micro;

pub use error::{Error, Result};
pub use geometry::{ArenaMap, TorusPoint};
pub use grid::{DensityField, Grid, ScalarField, VectorField};
pub use kernel::KernelParams;

/// A plain 2-vector (velocity, displacement).
pub type Vec2 = [f64; 2];

/// How per-agent work is scheduled.
///
/// Both modes are deterministic. `Sequential` performs every reduction in a
/// single fixed order and is the reference for bit-reproducibility; `Parallel`
/// splits work into fixed-size chunks whose partial results are combined in
/// chunk order, so its results are reproducible too but may differ from
/// `Sequential` in the last bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

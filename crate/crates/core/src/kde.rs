//! Periodic Gaussian kernel density estimation.
//!
//! Each agent contributes an isotropic Gaussian wrapped onto the torus by
//! summing its `(2P+1)²` images. The isotropic Gaussian factorizes along the
//! axes, so the image sum does too; the estimate on the grid is then the
//! matrix product `G₁ᵀ G₂` of per-agent 1-D profiles.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::geometry::{wrap_angle, TorusPoint};
use crate::grid::{Grid, ScalarField};
use crate::Execution;

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeParams {
    /// Gaussian standard deviation σ (radians).
    pub bandwidth: f64,
    /// Image rings summed per axis.
    pub periodization_order: u32,
    /// Total mass the estimate integrates to.
    pub mass: f64,
}

impl KdeParams {
    pub fn new(bandwidth: f64, periodization_order: u32, mass: f64) -> Result<Self> {
        ensure(bandwidth.is_finite() && bandwidth > 0.0, "kde.bandwidth", || {
            format!("must be positive, got {bandwidth}")
        })?;
        ensure(mass.is_finite() && mass >= 0.0, "kde.mass", || {
            format!("must be nonnegative, got {mass}")
        })?;
        Ok(KdeParams {
            bandwidth,
            periodization_order,
            mass,
        })
    }
}

impl Default for KdeParams {
    fn default() -> Self {
        KdeParams {
            bandwidth: 0.4,
            periodization_order: 2,
            mass: 1.0,
        }
    }
}

fn profile(grid: &Grid, x: f64, params: &KdeParams, out: &mut [f64]) {
    let p = params.periodization_order as i64;
    let inv = 1.0 / (2.0 * params.bandwidth * params.bandwidth);
    for (a, o) in out.iter_mut().enumerate() {
        let d = wrap_angle(grid.coordinate(a) - x);
        let mut s = 0.0;
        for n in -p..=p {
            let y = d + TAU * n as f64;
            s += (-y * y * inv).exp();
        }
        *o = s;
    }
}

fn profiles(grid: &Grid, agents: &[TorusPoint], params: &KdeParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = grid.size();
    let mut g1 = DMatrix::zeros(agents.len(), m);
    let mut g2 = DMatrix::zeros(agents.len(), m);
    let mut row = vec![0.0; m];
    for (i, p) in agents.iter().enumerate() {
        profile(grid, p.x1(), params, &mut row);
        g1.row_mut(i).copy_from_slice(&row);
        profile(grid, p.x2(), params, &mut row);
        g2.row_mut(i).copy_from_slice(&row);
    }
    (g1, g2)
}

fn unnormalized(grid: &Grid, agents: &[TorusPoint], params: &KdeParams) -> DMatrix<f64> {
    let (g1, g2) = profiles(grid, agents, params);
    g1.tr_mul(&g2)
}

/// Estimates the density of `agents` on `grid`, rescaled so that its mass
/// equals `params.mass`.
pub fn estimate_density(
    agents: &[TorusPoint],
    params: &KdeParams,
    grid: &Grid,
) -> Result<ScalarField> {
    estimate_density_with(agents, params, grid, Execution::Sequential)
}

pub fn estimate_density_with(
    agents: &[TorusPoint],
    params: &KdeParams,
    grid: &Grid,
    execution: Execution,
) -> Result<ScalarField> {
    if agents.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let m = grid.size();
    let sum = match execution {
        Execution::Sequential => unnormalized(grid, agents, params),
        Execution::Parallel => {
            let parts: Vec<DMatrix<f64>> = agents
                .par_chunks(CHUNK)
                .map(|chunk| unnormalized(grid, chunk, params))
                .collect();
            parts
                .into_iter()
                .reduce(|a, b| a + b)
                .expect("at least one chunk")
        }
    };
    let mut values = vec![0.0; grid.len()];
    for a in 0..m {
        for b in 0..m {
            values[grid.index(a, b)] = sum[(a, b)];
        }
    }
    // Gaussian normalization, then exact renormalization to absorb the
    // image truncation
    let norm = 1.0 / (2.0 * PI * params.bandwidth * params.bandwidth);
    let mut field = ScalarField::from_values(grid, values)?.scaled(norm);
    let raw_mass = field.mass();
    if raw_mass > 0.0 {
        field = field.scaled(params.mass / raw_mass);
    }
    Ok(field)
}

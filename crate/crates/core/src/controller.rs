//! Closed-loop herder control.
//!
//! Given the herders' density error `eᴴ = ρ̄ᴴ − ρᴴ`, the flux `w = ρᴴu` is
//! required to satisfy `∇·w = −Kᴴ eᴴ` and `∇×w = 0`. Writing `w = −∇φ`
//! turns this into a Poisson problem for `φ`, solved mode by mode; the
//! velocity field `u = w/ρᴴ` is then sampled at the herders' positions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::TorusPoint;
use crate::grid::{gradient, poisson_solve, ScalarField, Spectrum, VectorField};
use crate::Vec2;

/// Densities below this are clamped before dividing the flux.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Relative mass mismatch tolerated between desired and estimated density.
pub const MASS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGain(f64);

impl ControlGain {
    pub fn new(k: f64) -> Result<Self> {
        ensure(k.is_finite() && k > 0.0, "control gain", || {
            format!("must be positive, got {k}")
        })?;
        Ok(ControlGain(k))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// A signed density error on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField(ScalarField);

impl ErrorField {
    pub fn new(field: ScalarField) -> Self {
        ErrorField(field)
    }

    pub fn field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.mean()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.l2_norm()
    }
}

/// `eᴴ = ρ̄ᴴ − ρ̂ᴴ`. Both densities must carry the same mass.
pub fn herder_error(desired: &ScalarField, estimate: &ScalarField) -> Result<ErrorField> {
    let (m1, m2) = (desired.mass(), estimate.mass());
    let scale = m1.abs().max(m2.abs());
    if (m1 - m2).abs() > MASS_TOLERANCE * scale {
        return Err(Error::MassMismatch {
            desired: m1,
            estimated: m2,
        });
    }
    Ok(ErrorField(desired.sub(estimate)?))
}

/// Fields produced by one control tick.
#[derive(Debug, Clone)]
pub struct ControlFields {
    /// `φ` with `∇²φ = Kᴴ(eᴴ − mean eᴴ)`, zero mean.
    pub potential: ScalarField,
    /// `w = −∇φ`, irrotational by construction.
    pub flux: VectorField,
    /// `u = w / ρ̂ᴴ`.
    pub velocity: VectorField,
    /// Mean of `eᴴ` projected out before the solve.
    pub removed_mean: f64,
}

/// Computes potential, flux and herder velocity field from the density error.
pub fn control_field(
    error: &ErrorField,
    estimate: &ScalarField,
    gain: ControlGain,
) -> Result<ControlFields> {
    error.field().grid().check(estimate.grid())?;
    if let Some(index) = estimate.values().iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NonPositiveDensity {
            index,
            value: estimate.values()[index],
        });
    }
    // poisson_solve gives ∇²ψ = −K(e − ē); the control potential is φ = −ψ,
    // so that w = −∇φ = ∇ψ has ∇·w = −K(e − ē)
    let solution = poisson_solve(error.field(), gain.value());
    let flux = gradient(&solution.potential);
    let potential = solution.potential.scaled(-1.0);
    let inv = estimate.map(|r| 1.0 / r.max(DENSITY_FLOOR));
    let velocity = flux.times(&inv)?;
    Ok(ControlFields {
        potential,
        flux,
        velocity,
        removed_mean: solution.removed_mean,
    })
}

/// How a grid field is evaluated between nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Spectral,
}

fn bilinear(field: &VectorField, p: TorusPoint) -> Vec2 {
    let grid = field.grid();
    let m = grid.size();
    let h = grid.step();
    let locate = |x: f64| {
        let s = (x + PI) / h;
        let f = s.floor();
        let i = (f as i64).rem_euclid(m as i64) as usize;
        (i, (i + 1) % m, s - f)
    };
    let (a0, a1, ta) = locate(p.x1());
    let (b0, b1, tb) = locate(p.x2());
    let v00 = field.at(a0, b0);
    let v01 = field.at(a0, b1);
    let v10 = field.at(a1, b0);
    let v11 = field.at(a1, b1);
    let mut out = [0.0; 2];
    for c in 0..2 {
        let lo = v00[c] + tb * (v01[c] - v00[c]);
        let hi = v10[c] + tb * (v11[c] - v10[c]);
        out[c] = lo + ta * (hi - lo);
    }
    out
}

/// Samples `u` at each herder position.
pub fn sample_at_herders(u: &VectorField, herders: &[TorusPoint], interpolation: Interpolation) -> Vec<Vec2> {
    match interpolation {
        Interpolation::Bilinear => herders.iter().map(|&p| bilinear(u, p)).collect(),
        Interpolation::Spectral => {
            let s: [Spectrum; 2] = [u.component(0).spectrum(), u.component(1).spectrum()];
            herders
                .iter()
                .map(|&p| [s[0].evaluate(p), s[1].evaluate(p)])
                .collect()
        }
    }
}

/// Rescales commands faster than `max_speed` down to `max_speed`.
pub fn speed_limit(commands: &[Vec2], max_speed: f64) -> Vec<Vec2> {
    commands
        .iter()
        .map(|c| {
            let n = c[0].hypot(c[1]);
            if n > max_speed {
                let s = max_speed / n;
                [c[0] * s, c[1] * s]
            } else {
                *c
            }
        })
        .collect()
}

//! Points, displacements and distances on the periodic square `Ω = [-π, π)²`.
//!
//! Every coordinate uses the half-open convention `[-π, π)`: `π` itself is
//! represented by `-π`, so each equivalence class has exactly one
//! representative.

use std::f64::consts::{PI, TAU};

use crate::error::{ensure, Error, Result};
use crate::Vec2;

/// Maps a real number to its representative in `[-π, π)`.
///
/// Values already in range are returned unchanged, which makes the map
/// exactly idempotent.
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let r = x - TAU * ((x + PI) / TAU).floor();
    // floor() can land one period off when x + π is a hair below a multiple of 2π
    if r >= PI {
        r - TAU
    } else if r < -PI {
        r + TAU
    } else {
        r
    }
}

/// A point of the torus, both components in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusPoint {
    x1: f64,
    x2: f64,
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint { x1: 0.0, x2: 0.0 };

    /// Wraps arbitrary finite coordinates onto the torus.
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        wrap([x1, x2])
    }

    /// Caller guarantees finite input; wraps without checking.
    pub(crate) fn wrapped(x1: f64, x2: f64) -> Self {
        TorusPoint {
            x1: wrap_angle(x1),
            x2: wrap_angle(x2),
        }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn coords(&self) -> Vec2 {
        [self.x1, self.x2]
    }

    /// Moves the point by `delta` and wraps the result.
    pub fn translate(&self, delta: Vec2) -> Self {
        TorusPoint::wrapped(self.x1 + delta[0], self.x2 + delta[1])
    }
}

/// Wraps a raw 2-vector onto the torus. Non-finite input is rejected.
pub fn wrap(p: Vec2) -> Result<TorusPoint> {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(Error::NonFinite(p[0], p[1]));
    }
    Ok(TorusPoint::wrapped(p[0], p[1]))
}

/// Shortest periodic difference `a - b`, each component in `[-π, π)`.
pub fn wrapped_displacement(a: TorusPoint, b: TorusPoint) -> Vec2 {
    [wrap_angle(a.x1 - b.x1), wrap_angle(a.x2 - b.x2)]
}

/// Euclidean norm of the wrapped displacement; never exceeds `π√2`.
pub fn torus_distance(a: TorusPoint, b: TorusPoint) -> f64 {
    let d = wrapped_displacement(a, b);
    d[0].hypot(d[1])
}

/// Linear rescaling between `Ω` and a square arena `[-w, w]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArenaMap {
    half_width: f64,
}

impl ArenaMap {
    pub fn new(half_width: f64) -> Result<Self> {
        ensure(half_width.is_finite() && half_width > 0.0, "half_width", || {
            format!("must be positive and finite, got {half_width}")
        })?;
        Ok(ArenaMap { half_width })
    }

    /// The identity map (`w = π`).
    pub fn identity() -> Self {
        ArenaMap { half_width: PI }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Arena length per unit of `Ω` length.
    pub fn scale(&self) -> f64 {
        self.half_width / PI
    }

    pub fn to_arena(&self, p: TorusPoint) -> Vec2 {
        let s = self.scale();
        [p.x1 * s, p.x2 * s]
    }

    pub fn to_omega(&self, a: Vec2) -> Result<TorusPoint> {
        let s = self.scale();
        wrap([a[0] / s, a[1] / s])
    }

    pub fn length_to_arena(&self, len: f64) -> f64 {
        len * self.scale()
    }

    pub fn length_to_omega(&self, len: f64) -> f64 {
        len / self.scale()
    }
}

//! Uniform periodic grids, fields sampled on them, and the spectral toolkit:
//! FFT-based circular convolution, differential operators, the Poisson solve
//! and Fourier resampling.
//!
//! Node `(a, b)` of an `M × M` grid sits at `(-π + a·h, -π + b·h)` with
//! `h = 2π/M`; field values are stored row-major at index `a·M + b`.
//! Fourier bin `a` carries the signed wavenumber `a` for `a ≤ (M-1)/2` and
//! `a - M` above; for even `M` the bin `M/2` is the Nyquist mode, which the
//! first-derivative operators drop.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure, Error, Result};
use crate::geometry::TorusPoint;
use crate::kernel::{kernel_periodic, KernelParams};
use crate::Vec2;

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// An `M × M` periodic grid over `Ω`. Cloning is cheap; FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    m: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("m", &self.m).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        ensure(m >= 2, "grid size", || format!("need at least 2 cells per side, got {m}"))?;
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        };
        Ok(Grid {
            m,
            plans: Arc::new(plans),
        })
    }

    /// Cells per side.
    pub fn size(&self) -> usize {
        self.m
    }

    /// Number of nodes, `M²`.
    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid step `h = 2π/M`.
    pub fn step(&self) -> f64 {
        TAU / self.m as f64
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.step();
        h * h
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -PI + i as f64 * self.step()
    }

    pub fn node(&self, a: usize, b: usize) -> TorusPoint {
        TorusPoint::wrapped(self.coordinate(a), self.coordinate(b))
    }

    pub fn node_at(&self, index: usize) -> TorusPoint {
        self.node(index / self.m, index % self.m)
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.m + b
    }

    /// Signed wavenumber of Fourier bin `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let m = self.m as i64;
        let i = i as i64;
        if 2 * i < m {
            i
        } else {
            i - m
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        self.m.is_multiple_of(2) && 2 * i == self.m
    }

    pub fn nearest_node(&self, p: TorusPoint) -> (usize, usize) {
        let h = self.step();
        let idx = |x: f64| (((x + PI) / h).round() as usize) % self.m;
        (idx(p.x1()), idx(p.x2()))
    }

    pub(crate) fn check(&self, other: &Grid) -> Result<()> {
        if self.m == other.m {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.m,
                found: other.m,
            })
        }
    }

    fn fft2(&self, buf: &mut [Complex64], inverse: bool) {
        let fft = if inverse {
            &self.plans.inverse
        } else {
            &self.plans.forward
        };
        let m = self.m;
        fft.process(buf);
        let mut t = transpose(buf, m);
        fft.process(&mut t);
        let back = transpose(&t, m);
        buf.copy_from_slice(&back);
    }

    /// Unnormalized 2-D DFT of real samples.
    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut buf, false);
        buf
    }

    /// Inverse DFT including the `1/M²` factor; keeps the real part.
    pub(crate) fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut spec, true);
        let norm = 1.0 / self.len() as f64;
        spec.iter().map(|c| c.re * norm).collect()
    }
}

fn transpose(src: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m * m];
    for a in 0..m {
        for b in 0..m {
            out[b * m + a] = src[a * m + b];
        }
    }
    out
}

/// A real scalar field on a grid. Densities, potentials and error fields all
/// use this type; densities are additionally expected to be nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

/// Scalar field holding a (nonnegative) density in mass per unit area.
pub type DensityField = ScalarField;

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(TorusPoint) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_at(i))).collect();
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        ensure(values.len() == grid.len(), "field values", || {
            format!("expected {} values, got {}", grid.len(), values.len())
        })?;
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[self.grid.index(a, b)]
    }

    /// `Σ f·h²`; on a periodic uniform grid this is also the trapezoidal rule.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Grid approximation of the `L²(Ω)` norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Node holding the largest value (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.grid.m, best % self.grid.m)
    }

    pub fn argmin(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        (best / self.grid.m, best % self.grid.m)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn offset(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check(&other.grid)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Fails on the first node that is not strictly positive.
    pub fn check_strictly_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v > 0.0)) {
            None => Ok(()),
            Some(index) => Err(Error::NonPositiveDensity {
                index,
                value: self.values[index],
            }),
        }
    }

    /// Fourier-series coefficients `c_m = (2π)⁻² ∫ f e^{-j m·x} dx`.
    pub fn spectrum(&self) -> Spectrum {
        let raw = self.grid.forward(&self.values);
        let norm = 1.0 / self.grid.len() as f64;
        let m = self.grid.m;
        let coeffs = raw
            .into_iter()
            .enumerate()
            .map(|(i, c)| c * norm * node_phase(&self.grid, i / m, i % m))
            .collect();
        Spectrum {
            grid: self.grid.clone(),
            coeffs,
        }
    }

    /// Band-limited (Fourier) interpolation onto another grid. Modes that the
    /// target grid cannot represent unambiguously are dropped, as is the
    /// Nyquist mode of an even source grid.
    pub fn resample(&self, target: &Grid) -> ScalarField {
        if *target == self.grid {
            return self.clone();
        }
        let src = self.grid.forward(&self.values);
        let (m, t) = (self.grid.m, target.m);
        let ratio = (t * t) as f64 / (m * m) as f64;
        let fits = |k: i64| {
            let k2 = 2 * k.unsigned_abs() as usize;
            k2 < t
        };
        let mut out = vec![Complex64::new(0.0, 0.0); t * t];
        for a in 0..m {
            if self.grid.is_nyquist(a) {
                continue;
            }
            let k1 = self.grid.wavenumber(a);
            if !fits(k1) {
                continue;
            }
            for b in 0..m {
                if self.grid.is_nyquist(b) {
                    continue;
                }
                let k2 = self.grid.wavenumber(b);
                if !fits(k2) {
                    continue;
                }
                let ta = k1.rem_euclid(t as i64) as usize;
                let tb = k2.rem_euclid(t as i64) as usize;
                out[ta * t + tb] = src[a * m + b] * ratio;
            }
        }
        ScalarField {
            grid: target.clone(),
            values: target.inverse_real(out),
        }
    }
}

// e^{j m·π}: nodes start at -π, so the DFT of the samples differs from the
// Fourier coefficients by this sign.
fn node_phase(grid: &Grid, a: usize, b: usize) -> f64 {
    if (grid.wavenumber(a) + grid.wavenumber(b)).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fourier-series coefficients of a grid field, indexed like the grid.
#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Multi-index `(m₁, m₂)` of coefficient `(a, b)`.
    pub fn wavevector(&self, a: usize, b: usize) -> (i64, i64) {
        (self.grid.wavenumber(a), self.grid.wavenumber(b))
    }

    pub fn coeff(&self, m1: i64, m2: i64) -> Complex64 {
        let n = self.grid.m as i64;
        let a = m1.rem_euclid(n) as usize;
        let b = m2.rem_euclid(n) as usize;
        self.coeffs[self.grid.index(a, b)]
    }

    /// `(2π)² Σ |c_m|²`, equal to the squared `L²` norm of the field.
    pub fn energy(&self) -> f64 {
        TAU * TAU * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn to_field(&self) -> ScalarField {
        let m = self.grid.m;
        let n = self.grid.len() as f64;
        let raw = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * n * node_phase(&self.grid, i / m, i % m))
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values: self.grid.inverse_real(raw),
        }
    }

    /// Evaluates the truncated Fourier series at an arbitrary point.
    pub fn evaluate(&self, p: TorusPoint) -> f64 {
        let m = self.grid.m;
        let phases = |x: f64| -> Vec<Complex64> {
            (0..m)
                .map(|i| {
                    let k = self.grid.wavenumber(i) as f64;
                    Complex64::from_polar(1.0, k * x)
                })
                .collect()
        };
        let e1 = phases(p.x1());
        let e2 = phases(p.x2());
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..m {
            let mut row = Complex64::new(0.0, 0.0);
            for b in 0..m {
                row += self.coeffs[a * m + b] * e2[b];
            }
            acc += row * e1[a];
        }
        acc.re
    }
}

/// A two-component field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: grid.clone(),
            x1: vec![0.0; grid.len()],
            x2: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(TorusPoint) -> Vec2) -> Self {
        let (x1, x2) = (0..grid.len()).map(|i| {
            let v = f(grid.node_at(i));
            (v[0], v[1])
        }).unzip();
        VectorField {
            grid: grid.clone(),
            x1,
            x2,
        }
    }

    pub fn from_components(x1: ScalarField, x2: ScalarField) -> Result<Self> {
        x1.grid.check(&x2.grid)?;
        Ok(VectorField {
            grid: x1.grid.clone(),
            x1: x1.values,
            x2: x2.values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: if c == 0 { self.x1.clone() } else { self.x2.clone() },
        }
    }

    #[inline]
    pub fn at_index(&self, i: usize) -> Vec2 {
        [self.x1[i], self.x2[i]]
    }

    pub fn at(&self, a: usize, b: usize) -> Vec2 {
        self.at_index(self.grid.index(a, b))
    }

    pub fn scaled(&self, c: f64) -> Self {
        VectorField {
            grid: self.grid.clone(),
            x1: self.x1.iter().map(|v| v * c).collect(),
            x2: self.x2.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise product with a scalar field.
    pub fn times(&self, s: &ScalarField) -> Result<Self> {
        self.grid.check(&s.grid)?;
        Ok(VectorField {
            grid: self.grid.clone(),
            x1: self.x1.iter().zip(&s.values).map(|(v, r)| v * r).collect(),
            x2: self.x2.iter().zip(&s.values).map(|(v, r)| v * r).collect(),
        })
    }

    pub fn max_norm(&self) -> f64 {
        self.x1
            .iter()
            .zip(&self.x2)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.x1.iter().chain(&self.x2).map(|v| v * v).sum();
        (s * self.grid.cell_area()).sqrt()
    }

    pub fn resample(&self, target: &Grid) -> VectorField {
        VectorField {
            grid: target.clone(),
            x1: self.component(0).resample(target).values,
            x2: self.component(1).resample(target).values,
        }
    }
}

fn derivative_factors(grid: &Grid) -> Vec<Complex64> {
    (0..grid.m)
        .map(|i| {
            if grid.is_nyquist(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, grid.wavenumber(i) as f64)
            }
        })
        .collect()
}

/// Spectral gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = &f.grid;
    let m = grid.m;
    let d = derivative_factors(grid);
    let spec = grid.forward(&f.values);
    let mut s1 = spec.clone();
    let mut s2 = spec;
    for a in 0..m {
        for b in 0..m {
            let i = a * m + b;
            s1[i] *= d[a];
            s2[i] *= d[b];
        }
    }
    VectorField {
        grid: grid.clone(),
        x1: grid.inverse_real(s1),
        x2: grid.inverse_real(s2),
    }
}

/// Spectral divergence.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = &v.grid;
    let m = grid.m;
    let d = derivative_factors(grid);
    let s1 = grid.forward(&v.x1);
    let s2 = grid.forward(&v.x2);
    let out = (0..grid.len())
        .map(|i| d[i / m] * s1[i] + d[i % m] * s2[i])
        .collect();
    ScalarField {
        grid: grid.clone(),
        values: grid.inverse_real(out),
    }
}

/// Scalar curl `∂₁v₂ − ∂₂v₁`.
pub fn curl(v: &VectorField) -> ScalarField {
    let grid = &v.grid;
    let m = grid.m;
    let d = derivative_factors(grid);
    let s1 = grid.forward(&v.x1);
    let s2 = grid.forward(&v.x2);
    let out = (0..grid.len())
        .map(|i| d[i / m] * s2[i] - d[i % m] * s1[i])
        .collect();
    ScalarField {
        grid: grid.clone(),
        values: grid.inverse_real(out),
    }
}

fn squared_wavenumbers(grid: &Grid) -> Vec<f64> {
    let m = grid.m;
    (0..grid.len())
        .map(|i| {
            let k1 = grid.wavenumber(i / m) as f64;
            let k2 = grid.wavenumber(i % m) as f64;
            k1 * k1 + k2 * k2
        })
        .collect()
}

/// Spectral Laplacian, multiplying each coefficient by `-‖m‖²`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = &f.grid;
    let k2 = squared_wavenumbers(grid);
    let spec: Vec<Complex64> = grid
        .forward(&f.values)
        .into_iter()
        .zip(&k2)
        .map(|(c, k)| -c * *k)
        .collect();
    ScalarField {
        grid: grid.clone(),
        values: grid.inverse_real(spec),
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub potential: ScalarField,
    /// Mean of the right-hand side that was projected out before solving.
    pub removed_mean: f64,
}

/// Solves `∇²φ = -gain · (rhs − mean(rhs))` on the torus with zero-mean `φ`.
///
/// In coefficient space `φ_m = gain · c_m / ‖m‖²` for `m ≠ 0` and `φ_0 = 0`.
pub fn poisson_solve(rhs: &ScalarField, gain: f64) -> PoissonSolution {
    let grid = &rhs.grid;
    let k2 = squared_wavenumbers(grid);
    let mut spec = grid.forward(&rhs.values);
    let removed_mean = spec[0].re / grid.len() as f64;
    for (c, k) in spec.iter_mut().zip(&k2) {
        *c = if *k == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            *c * (gain / k)
        };
    }
    PoissonSolution {
        potential: ScalarField {
            grid: grid.clone(),
            values: grid.inverse_real(spec),
        },
        removed_mean,
    }
}

/// A vector kernel sampled at the lattice displacements of a grid, with its
/// spectrum cached for repeated convolutions.
///
/// Sample `(a, b)` holds the kernel at the wrapped displacement
/// `(a·h, b·h)`, so index `(0, 0)` is the zero displacement.
#[derive(Debug, Clone)]
pub struct KernelSamples {
    grid: Grid,
    samples: [Vec<f64>; 2],
    spectra: [Vec<Complex64>; 2],
}

impl KernelSamples {
    /// Samples the periodized interaction kernel.
    pub fn new(grid: &Grid, params: &KernelParams) -> Self {
        let h = grid.step();
        let mut x1 = Vec::with_capacity(grid.len());
        let mut x2 = Vec::with_capacity(grid.len());
        for a in 0..grid.m {
            for b in 0..grid.m {
                let d = TorusPoint::wrapped(a as f64 * h, b as f64 * h);
                let v = kernel_periodic(d, params);
                x1.push(v[0]);
                x2.push(v[1]);
            }
        }
        Self::from_samples(grid, x1, x2).expect("sample count matches grid")
    }

    pub fn from_samples(grid: &Grid, x1: Vec<f64>, x2: Vec<f64>) -> Result<Self> {
        for len in [x1.len(), x2.len()] {
            ensure(len == grid.len(), "kernel samples", || {
                format!("expected {} values, got {len}", grid.len())
            })?;
        }
        let spectra = [grid.forward(&x1), grid.forward(&x2)];
        Ok(KernelSamples {
            grid: grid.clone(),
            samples: [x1, x2],
            spectra,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.samples[c]
    }
}

/// Circular convolution `(f ∗ ρ)(q_i) = Σ_j h² f(q_i − q_j) ρ(q_j)` via FFT.
pub fn circular_convolve(kernel: &KernelSamples, rho: &ScalarField) -> Result<VectorField> {
    kernel.grid.check(&rho.grid)?;
    let grid = &rho.grid;
    let spec = grid.forward(&rho.values);
    let h2 = grid.cell_area();
    let mut out = [Vec::new(), Vec::new()];
    for c in 0..2 {
        let prod = spec
            .iter()
            .zip(&kernel.spectra[c])
            .map(|(r, k)| r * k * h2)
            .collect();
        out[c] = grid.inverse_real(prod);
    }
    let [x1, x2] = out;
    Ok(VectorField {
        grid: grid.clone(),
        x1,
        x2,
    })
}

//! Feasibility analysis: how much herder mass is needed to hold the targets
//! at a desired density.
//!
//! The desired target density is a von Mises profile centred on the goal.
//! Requiring it to be a steady state of the target PDE fixes the drift the
//! herders must generate, `v̄ = D ∇ρ̄ᵀ / ρ̄ᵀ`. Deconvolving that drift by the
//! interaction kernel gives a herder density `H` defined up to a constant;
//! lifting it by `A = −min H` yields the cheapest nonnegative herder density
//! and hence the minimal herder mass `M̂ᴴ` and herder count `Nᴴ`.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{ensure, Error, Result};
use crate::geometry::{torus_distance, TorusPoint};
use crate::grid::{divergence, gradient, Grid, KernelSamples, ScalarField, VectorField};
use crate::kernel::KernelParams;

/// Relative singular-value cutoff used by the least-squares deconvolution.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-8;

/// Relative residual above which a deconvolution is reported as inexact.
pub const RESIDUAL_WARNING: f64 = 1e-3;

/// Circular goal region of radius `r*` around `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalRegion {
    center: TorusPoint,
    radius: f64,
}

impl GoalRegion {
    pub fn new(center: TorusPoint, radius: f64) -> Result<Self> {
        ensure(radius > 0.0 && radius < std::f64::consts::PI, "goal.radius", || {
            format!("must lie in (0, π), got {radius}")
        })?;
        Ok(GoalRegion { center, radius })
    }

    pub fn center(&self) -> TorusPoint {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Containment uses the periodic distance.
    pub fn contains(&self, p: TorusPoint) -> bool {
        torus_distance(p, self.center) <= self.radius
    }
}

/// Parameters of the desired target density
/// `ρ̄ᵀ ∝ exp{k₁cos(x₁−μ) + k₂cos(x₂−ν) [+ cross term]}`.
///
/// With `cross_term` set, the literal product term
/// `cos(x₁−μ)cos(x₁−ν) + sin(x₂−μ)sin(x₂−ν)` of fixed unit weight is added
/// to the exponent; by default the separable form is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMisesSpec {
    pub concentration: [f64; 2],
    pub mean: [f64; 2],
    pub target_mass: f64,
    pub cross_term: bool,
}

impl VonMisesSpec {
    pub fn new(concentration: [f64; 2], mean: [f64; 2], target_mass: f64, cross_term: bool) -> Result<Self> {
        ensure(
            concentration.iter().all(|k| k.is_finite() && *k >= 0.0),
            "von_mises.concentration",
            || format!("must be nonnegative, got {concentration:?}"),
        )?;
        ensure(target_mass.is_finite() && target_mass > 0.0, "target mass", || {
            format!("must be positive, got {target_mass}")
        })?;
        Ok(VonMisesSpec {
            concentration,
            mean,
            target_mass,
            cross_term,
        })
    }

    /// Centres the density on the goal with `k₁ = k₂ = 3/r*`.
    pub fn for_goal(goal: &GoalRegion, target_mass: f64) -> Result<Self> {
        let k = 3.0 / goal.radius();
        Self::new([k, k], goal.center().coords(), target_mass, false)
    }

    fn exponent(&self, p: TorusPoint) -> f64 {
        let [k1, k2] = self.concentration;
        let [mu, nu] = self.mean;
        let (x1, x2) = (p.x1(), p.x2());
        let mut e = k1 * (x1 - mu).cos() + k2 * (x2 - nu).cos();
        if self.cross_term {
            e += (x1 - mu).cos() * (x1 - nu).cos() + (x2 - mu).sin() * (x2 - nu).sin();
        }
        e
    }
}

/// Samples the von Mises density on `grid`, normalized by grid quadrature so
/// that its mass equals `spec.target_mass`.
pub fn von_mises_density(spec: &VonMisesSpec, grid: &Grid) -> ScalarField {
    let raw = ScalarField::from_fn(grid, |p| spec.exponent(p));
    let top = raw.max();
    let shape = raw.map(|e| (e - top).exp());
    let z = spec.target_mass / shape.mass();
    shape.scaled(z)
}

/// Drift that makes `rho_bar_t` a steady state: `D ∇ρ̄ᵀ / ρ̄ᵀ`.
pub fn desired_velocity_field(rho_bar_t: &ScalarField, diffusion: f64) -> Result<VectorField> {
    rho_bar_t.check_strictly_positive()?;
    let grad = gradient(rho_bar_t);
    let inv = rho_bar_t.map(|r| diffusion / r);
    grad.times(&inv)
}

/// The quadrature matrix `F` of the circular convolution on a grid,
/// factorized once for repeated least-squares solves.
///
/// Rows `0..M²` hold the first velocity component at each node, rows
/// `M²..2M²` the second; column `j` is the herder density at node `j`.
pub struct DeconvolutionOperator {
    grid: Grid,
    kernel: KernelParams,
    matrix: DMatrix<f64>,
    svd: SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl std::fmt::Debug for DeconvolutionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeconvolutionOperator")
            .field("grid", &self.grid)
            .field("kernel", &self.kernel)
            .finish_non_exhaustive()
    }
}

/// Outcome of a deconvolution.
#[derive(Debug, Clone)]
pub struct Deconvolution {
    /// Minimum-norm least-squares solution `H`.
    pub field: ScalarField,
    /// `‖F·H − v‖ / ‖v‖` (zero when `v = 0`).
    pub residual: f64,
    /// Number of singular values kept.
    pub rank: usize,
}

impl DeconvolutionOperator {
    pub fn assemble(grid: &Grid, kernel: &KernelParams) -> Self {
        let (m, n) = (grid.size(), grid.len());
        let h2 = grid.cell_area();
        // displacements are taken on the lattice so that the matrix is
        // exactly the circulant behind the FFT convolution
        let samples = KernelSamples::new(grid, kernel);
        let (f1, f2) = (samples.component(0), samples.component(1));
        let mut matrix = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            let (ai, bi) = (i / m, i % m);
            for j in 0..n {
                let (aj, bj) = (j / m, j % m);
                let k = grid.index((ai + m - aj) % m, (bi + m - bj) % m);
                matrix[(i, j)] = h2 * f1[k];
                matrix[(n + i, j)] = h2 * f2[k];
            }
        }
        let svd = SVD::new(matrix.clone(), true, true);
        DeconvolutionOperator {
            grid: grid.clone(),
            kernel: *kernel,
            matrix,
            svd,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn singular_values(&self) -> &[f64] {
        self.svd.singular_values.as_slice()
    }

    /// `F·ρ`, the quadrature form of the convolution.
    pub fn apply(&self, rho: &ScalarField) -> Result<VectorField> {
        self.grid.check(rho.grid())?;
        let n = self.grid.len();
        let out = &self.matrix * DVector::from_column_slice(rho.values());
        let x1 = ScalarField::from_values(&self.grid, out.rows(0, n).iter().copied().collect())?;
        let x2 = ScalarField::from_values(&self.grid, out.rows(n, n).iter().copied().collect())?;
        VectorField::from_components(x1, x2)
    }

    /// Least-squares inversion of `F·H = v̄` with a relative singular-value
    /// cutoff. The result is the minimum-norm solution, so it has zero mean
    /// whenever constants lie in the kernel's null space.
    pub fn deconvolve(&self, v_bar: &VectorField) -> Result<Deconvolution> {
        self.grid.check(v_bar.grid())?;
        let rhs = DVector::from_iterator(
            2 * self.grid.len(),
            v_bar.x1().iter().chain(v_bar.x2()).copied(),
        );
        let sv = &self.svd.singular_values;
        let eps = SINGULAR_VALUE_CUTOFF * sv.max();
        let rank = sv.iter().filter(|s| **s > eps).count();
        let sol = self
            .svd
            .solve(&rhs, eps)
            .expect("SVD computed with both singular-vector sets");
        let norm = rhs.norm();
        let residual = if norm > 0.0 {
            (&self.matrix * &sol - &rhs).norm() / norm
        } else {
            0.0
        };
        if residual > RESIDUAL_WARNING {
            warn!("deconvolution residual {residual:.3e} exceeds {RESIDUAL_WARNING:e}");
        }
        let field = ScalarField::from_values(&self.grid, sol.iter().copied().collect())?;
        Ok(Deconvolution {
            field,
            residual,
            rank,
        })
    }
}

/// The cheapest nonnegative herder density built from a deconvolution.
#[derive(Debug, Clone)]
pub struct MinimalHerderMass {
    /// `ρ̄ᴴ = H + A`, nonnegative with minimum exactly zero.
    pub desired_density: ScalarField,
    /// The lift `A = −min H`.
    pub offset: f64,
    /// `M̂ᴴ = ∫ ρ̄ᴴ`.
    pub minimal_mass: f64,
}

pub fn minimal_herder_mass(h: &ScalarField) -> MinimalHerderMass {
    let offset = -h.min();
    let desired_density = h.offset(offset);
    let minimal_mass = desired_density.mass();
    MinimalHerderMass {
        desired_density,
        offset,
        minimal_mass,
    }
}

/// `Nᴴ = ⌈Nᵀ M̂ᴴ / (1 − M̂ᴴ)⌉`.
pub fn herder_count(target_count: u64, minimal_mass: f64) -> Result<u64> {
    ensure(minimal_mass >= 0.0, "minimal mass", || {
        format!("must be nonnegative, got {minimal_mass}")
    })?;
    if minimal_mass >= 1.0 {
        return Err(Error::Infeasible(minimal_mass));
    }
    let exact = target_count as f64 * minimal_mass / (1.0 - minimal_mass);
    // absorb rounding noise such as 280.00000000000006
    Ok((exact - 1e-9 * exact.max(1.0)).ceil().max(0.0) as u64)
}

/// Sufficient-condition data for the target error decay.
#[derive(Debug, Clone)]
pub struct StabilityMargin {
    /// `G = ∇·(∇ρ̄ᵀ/ρ̄ᵀ)`.
    pub g: ScalarField,
    pub g_sup: f64,
    /// Guaranteed decay rate `D(2 − ‖G‖∞)` of the squared error norm.
    pub rate: f64,
    /// Whether `‖G‖∞ < 2`, i.e. whether the rate is actually guaranteed.
    pub certified: bool,
}

pub fn stability_margin(rho_bar_t: &ScalarField, diffusion: f64) -> Result<StabilityMargin> {
    rho_bar_t.check_strictly_positive()?;
    let inv = rho_bar_t.map(|r| 1.0 / r);
    let g = divergence(&gradient(rho_bar_t).times(&inv)?);
    let g_sup = g.max_abs();
    Ok(StabilityMargin {
        rate: diffusion * (2.0 - g_sup),
        certified: g_sup < 2.0,
        g,
        g_sup,
    })
}

/// Inputs of the full feasibility pipeline.
#[derive(Debug, Clone)]
pub struct FeasibilitySetup {
    pub kernel: KernelParams,
    pub target: VonMisesSpec,
    pub diffusion: f64,
    pub target_count: u64,
    /// Grid on which the desired densities are reported and the controller
    /// runs.
    pub control_grid: Grid,
}

/// Everything the pipeline produces, sampled on the control grid.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub target_density: ScalarField,
    pub desired_velocity: VectorField,
    /// Raw deconvolution `H`, Fourier-interpolated to the control grid.
    pub deconvolution: ScalarField,
    pub residual: f64,
    pub herders: MinimalHerderMass,
    /// `None` when `M̂ᴴ ≥ 1`.
    pub herder_count: Option<u64>,
    pub stability: StabilityMargin,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.herder_count.is_some()
    }

    pub fn minimal_mass(&self) -> f64 {
        self.herders.minimal_mass
    }
}

fn deconvolved_profile(
    spec: &VonMisesSpec,
    diffusion: f64,
    op: &DeconvolutionOperator,
    control: &Grid,
) -> Result<(ScalarField, f64)> {
    let rho = von_mises_density(spec, op.grid());
    let v = desired_velocity_field(&rho, diffusion)?;
    let d = op.deconvolve(&v)?;
    Ok((d.field.resample(control), d.residual))
}

/// Runs desired density → drift → deconvolution → minimal mass → count.
pub fn analyze(setup: &FeasibilitySetup, op: &DeconvolutionOperator) -> Result<FeasibilityReport> {
    ensure(setup.diffusion >= 0.0, "diffusion", || {
        format!("must be nonnegative, got {}", setup.diffusion)
    })?;
    let control = &setup.control_grid;
    let (h, residual) = deconvolved_profile(&setup.target, setup.diffusion, op, control)?;
    let herders = minimal_herder_mass(&h);
    let herder_count = match herder_count(setup.target_count, herders.minimal_mass) {
        Ok(n) => Some(n),
        Err(Error::Infeasible(_)) => None,
        Err(e) => return Err(e),
    };
    let mut spec = setup.target;
    if let Some(nh) = herder_count {
        let total = (setup.target_count + nh) as f64;
        if setup.target_count > 0 {
            spec.target_mass = setup.target_count as f64 / total;
        }
    }
    let target_density = von_mises_density(&spec, control);
    let desired_velocity = desired_velocity_field(&target_density, setup.diffusion)?;
    let stability = stability_margin(&target_density, setup.diffusion)?;
    Ok(FeasibilityReport {
        target_density,
        desired_velocity,
        deconvolution: h,
        residual,
        herders,
        herder_count,
        stability,
    })
}

/// `M̂ᴴ` over a `(k, D)` grid with `k₁ = k₂ = k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityMap {
    pub k_values: Vec<f64>,
    pub d_values: Vec<f64>,
    /// `values[i][j]` is `M̂ᴴ` at `D = d_values[i]`, `k = k_values[j]`.
    pub values: Vec<Vec<f64>>,
}

impl FeasibilityMap {
    /// Entries clipped to `[0, 1]`.
    pub fn saturated(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| row.iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .collect()
    }

    /// CSV matrix: header row of `k` values, one row per `D`, saturated.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("D\\k");
        for k in &self.k_values {
            let _ = write!(s, ",{k}");
        }
        s.push('\n');
        for (d, row) in self.d_values.iter().zip(self.saturated()) {
            let _ = write!(s, "{d}");
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Sweeps `M̂ᴴ` over concentrations and diffusion coefficients with a
/// goal-centred (`μ = ν = 0`) separable target density.
pub fn feasibility_map(
    k_values: &[f64],
    d_values: &[f64],
    op: &DeconvolutionOperator,
    control: &Grid,
) -> Result<FeasibilityMap> {
    let mut values = Vec::with_capacity(d_values.len());
    for &d in d_values {
        ensure(d > 0.0, "sweep D", || format!("must be positive, got {d}"))?;
        let mut row = Vec::with_capacity(k_values.len());
        for &k in k_values {
            let spec = VonMisesSpec::new([k, k], [0.0, 0.0], 1.0, false)?;
            let (h, _) = deconvolved_profile(&spec, d, op, control)?;
            row.push(minimal_herder_mass(&h).minimal_mass);
        }
        values.push(row);
    }
    Ok(FeasibilityMap {
        k_values: k_values.to_vec(),
        d_values: d_values.to_vec(),
        values,
    })
}

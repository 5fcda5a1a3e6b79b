//! Agent-based simulation of herders and targets.
//!
//! Herders are single integrators driven by the sampled control field;
//! targets follow `dT = α Σ_j f({T, H_j}) dt + √(2D) dB`, integrated with
//! Euler–Maruyama. Noise comes from one counter-addressed ChaCha stream per
//! target, positioned by step index, so results do not depend on the order in
//! which targets are updated.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::controller::{
    control_field, herder_error, sample_at_herders, speed_limit, ControlGain, Interpolation,
};
use crate::error::{ensure, Result, Error};
use crate::feasibility::GoalRegion;
use crate::geometry::{wrapped_displacement, TorusPoint};
use crate::grid::{Grid, ScalarField, VectorField};
use crate::kde::{estimate_density_with, KdeParams};
use crate::kernel::{KernelParams, PeriodicKernel};
use crate::{Execution, Vec2};

// words reserved per (target, step); a normal pair rarely needs more than 4
const WORDS_PER_STEP: u128 = 256;
const INIT_STREAM: u64 = u64::MAX;

/// Positions of all agents, wrapped into `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble {
    pub herders: Vec<TorusPoint>,
    pub targets: Vec<TorusPoint>,
}

impl AgentEnsemble {
    /// `α = 1/(Nᴴ + Nᵀ)`, the mass carried by each agent.
    pub fn alpha(&self) -> f64 {
        1.0 / (self.herders.len() + self.targets.len()) as f64
    }

    pub fn herder_mass(&self) -> f64 {
        self.herders.len() as f64 * self.alpha()
    }
}

/// `n` herders on a rectangular lattice with equal margins: `⌈√n⌉` columns
/// along `x₁`, as many rows as needed along `x₂`, filled column by column.
pub fn herder_lattice(n: usize) -> Vec<TorusPoint> {
    if n == 0 {
        return Vec::new();
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (s1, s2) = (TAU / cols as f64, TAU / rows as f64);
    (0..n)
        .map(|k| {
            let (i, j) = (k / rows, k % rows);
            TorusPoint::wrapped(-PI + s1 * (i as f64 + 0.5), -PI + s2 * (j as f64 + 0.5))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub diffusion: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Steps between density-estimation/Poisson updates.
    pub control_period: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.dt.is_finite() && self.dt > 0.0, "sim.dt", || {
            format!("must be positive, got {}", self.dt)
        })?;
        ensure(self.horizon >= 0.0, "sim.horizon", || {
            format!("must be nonnegative, got {}", self.horizon)
        })?;
        ensure(self.diffusion >= 0.0, "sim.diffusion", || {
            format!("must be nonnegative, got {}", self.diffusion)
        })?;
        ensure(self.control_period >= 1, "sim.control_period", || "must be at least 1".into())
    }

    /// Number of Euler–Maruyama steps covering the horizon.
    pub fn steps(&self) -> u64 {
        (self.horizon / self.dt).round() as u64
    }
}

/// Counter-addressed Gaussian noise: the draw for `(target, step)` does not
/// depend on any other draw.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    base: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        NoiseStreams {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Two independent standard normal variates.
    pub fn normal_pair(&self, target: u64, step: u64) -> Vec2 {
        let mut rng = self.base.clone();
        rng.set_stream(target);
        rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        [rng.sample(StandardNormal), rng.sample(StandardNormal)]
    }

    /// Stream reserved for initial conditions.
    pub fn init_rng(&self) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(INIT_STREAM);
        rng.set_word_pos(0);
        rng
    }
}

/// `n` targets drawn uniformly on `Ω`.
pub fn uniform_targets(n: usize, rng: &mut impl Rng) -> Vec<TorusPoint> {
    (0..n)
        .map(|_| TorusPoint::wrapped(rng.random_range(-PI..PI), rng.random_range(-PI..PI)))
        .collect()
}

/// Repulsive drift `α Σ_j f({T, H_j})` acting on one target.
pub fn target_drift(target: TorusPoint, herders: &[TorusPoint], alpha: f64, kernel: &PeriodicKernel) -> Vec2 {
    let mut acc = [0.0, 0.0];
    for &h in herders {
        let f = kernel.eval(wrapped_displacement(target, h));
        acc[0] += f[0];
        acc[1] += f[1];
    }
    [alpha * acc[0], alpha * acc[1]]
}

/// One Euler–Maruyama step. Drifts are evaluated at the pre-step herder
/// positions.
pub fn step(
    ensemble: &mut AgentEnsemble,
    commands: &[Vec2],
    params: &SimParams,
    noise: &NoiseStreams,
    step_index: u64,
    kernel: &PeriodicKernel,
    execution: Execution,
) -> Result<()> {
    ensure(commands.len() == ensemble.herders.len(), "commands", || {
        format!("expected {} herder commands, got {}", ensemble.herders.len(), commands.len())
    })?;
    let dt = params.dt;
    let alpha = ensemble.alpha();
    let sigma = (2.0 * params.diffusion * dt).sqrt();
    let herders = &ensemble.herders;
    let update = |k: usize, t: &mut TorusPoint| {
        let drift = target_drift(*t, herders, alpha, kernel);
        let mut dx = [drift[0] * dt, drift[1] * dt];
        if sigma > 0.0 {
            let xi = noise.normal_pair(k as u64, step_index);
            dx[0] += sigma * xi[0];
            dx[1] += sigma * xi[1];
        }
        *t = t.translate(dx);
    };
    match execution {
        Execution::Sequential => ensemble.targets.iter_mut().enumerate().for_each(|(k, t)| update(k, t)),
        Execution::Parallel => ensemble
            .targets
            .par_iter_mut()
            .enumerate()
            .for_each(|(k, t)| update(k, t)),
    }
    for (h, u) in ensemble.herders.iter_mut().zip(commands) {
        *h = h.translate([u[0] * dt, u[1] * dt]);
    }
    Ok(())
}

/// Percentage `χ` of targets inside the goal region at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainmentMetric {
    pub time: f64,
    pub chi: f64,
    pub inside: usize,
}

pub fn containment(targets: &[TorusPoint], goal: &GoalRegion, time: f64) -> Result<ContainmentMetric> {
    if targets.is_empty() {
        return Err(Error::NoTargets);
    }
    let inside = targets.iter().filter(|&&t| goal.contains(t)).count();
    Ok(ContainmentMetric {
        time,
        chi: 100.0 * inside as f64 / targets.len() as f64,
        inside,
    })
}

/// Adjusts a desired herder density to carry `mass`.
///
/// Extra mass is added as a uniform lift, which leaves the generated drift
/// unchanged because the odd kernel annihilates constants. A smaller mass
/// (too few herders) is handled by scaling, which keeps the density
/// nonnegative but weakens the drift proportionally.
pub fn match_mass(desired: &ScalarField, mass: f64) -> ScalarField {
    let current = desired.mass();
    if mass >= current {
        desired.offset((mass - current) / (TAU * TAU))
    } else if current > 0.0 {
        desired.scaled(mass / current)
    } else {
        ScalarField::constant(desired.grid(), mass / (TAU * TAU))
    }
}

/// Everything needed to run the closed-loop agent simulation.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub kernel: KernelParams,
    /// Side of the image-correction lookup table; `0` evaluates the image sum
    /// exactly for every pair.
    pub kernel_table: usize,
    pub kde_bandwidth: f64,
    pub kde_order: u32,
    pub goal: GoalRegion,
    pub params: SimParams,
    pub gain: ControlGain,
    pub grid: Grid,
    /// Desired herder density; rescaled internally to the herders' mass.
    pub desired_herder_density: ScalarField,
    pub herder_count: usize,
    pub target_count: usize,
    pub max_speed: Option<f64>,
    pub interpolation: Interpolation,
    pub execution: Execution,
    /// Steps between metric records (the final state is always recorded).
    pub metrics_every: u64,
}

/// One line of the metric series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub containment: ContainmentMetric,
    /// `‖ρ̄ᴴ − ρ̂ᴴ‖₂` for the state at this time (NaN without herders).
    pub herder_error_l2: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub metrics: Vec<MetricRecord>,
    pub final_ensemble: AgentEnsemble,
}

impl RunRecord {
    pub fn final_chi(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.containment.chi)
    }
}

/// Closed-loop simulation state.
pub struct Simulation {
    setup: SimulationSetup,
    ensemble: AgentEnsemble,
    kernel: PeriodicKernel,
    noise: NoiseStreams,
    desired: ScalarField,
    kde: KdeParams,
    velocity: Option<VectorField>,
    error_l2: Option<(u64, f64)>,
    step_index: u64,
}

impl Simulation {
    pub fn new(setup: SimulationSetup) -> Result<Self> {
        setup.params.validate()?;
        setup.kernel.validate()?;
        setup.grid.check(setup.desired_herder_density.grid())?;
        ensure(setup.metrics_every >= 1, "metrics cadence", || "must be at least 1".into())?;
        if let Some(v) = setup.max_speed {
            ensure(v > 0.0, "max_speed", || format!("must be positive, got {v}"))?;
        }
        let noise = NoiseStreams::new(setup.params.seed);
        let targets = uniform_targets(setup.target_count, &mut noise.init_rng());
        let ensemble = AgentEnsemble {
            herders: herder_lattice(setup.herder_count),
            targets,
        };
        Self::with_ensemble(setup, ensemble)
    }

    /// Starts from explicit positions instead of lattice/uniform ones.
    pub fn with_ensemble(setup: SimulationSetup, ensemble: AgentEnsemble) -> Result<Self> {
        let mass = ensemble.herder_mass();
        let kde = KdeParams::new(setup.kde_bandwidth, setup.kde_order, mass)?;
        let desired = match_mass(&setup.desired_herder_density, mass);
        let kernel = if setup.kernel_table == 0 {
            PeriodicKernel::exact(setup.kernel)
        } else {
            PeriodicKernel::tabulated(setup.kernel, setup.kernel_table)
        };
        Ok(Simulation {
            noise: NoiseStreams::new(setup.params.seed),
            setup,
            ensemble,
            kernel,
            desired,
            kde,
            velocity: None,
            error_l2: None,
            step_index: 0,
        })
    }

    pub fn ensemble(&self) -> &AgentEnsemble {
        &self.ensemble
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.setup.params.dt
    }

    pub fn total_steps(&self) -> u64 {
        self.setup.params.steps()
    }

    pub fn setup(&self) -> &SimulationSetup {
        &self.setup
    }

    /// Desired herder density after mass matching.
    pub fn desired_density(&self) -> &ScalarField {
        &self.desired
    }

    /// Velocity field from the most recent control update.
    pub fn velocity_field(&self) -> Option<&VectorField> {
        self.velocity.as_ref()
    }

    fn estimate(&self) -> Result<ScalarField> {
        estimate_density_with(&self.ensemble.herders, &self.kde, &self.setup.grid, self.setup.execution)
    }

    /// Density estimate → error → Poisson solve; stores the new field.
    pub fn control_update(&mut self) -> Result<()> {
        if self.ensemble.herders.is_empty() {
            return Ok(());
        }
        let estimate = self.estimate()?;
        let error = herder_error(&self.desired, &estimate)?;
        self.error_l2 = Some((self.step_index, error.l2_norm()));
        let fields = control_field(&error, &estimate, self.setup.gain)?;
        self.velocity = Some(fields.velocity);
        Ok(())
    }

    fn herder_error_now(&mut self) -> Result<f64> {
        if self.ensemble.herders.is_empty() {
            return Ok(f64::NAN);
        }
        if let Some((s, e)) = self.error_l2 {
            if s == self.step_index {
                return Ok(e);
            }
        }
        let estimate = self.estimate()?;
        let e = herder_error(&self.desired, &estimate)?.l2_norm();
        self.error_l2 = Some((self.step_index, e));
        Ok(e)
    }

    pub fn metric(&mut self) -> Result<MetricRecord> {
        let containment = containment(&self.ensemble.targets, &self.setup.goal, self.time())?;
        Ok(MetricRecord {
            containment,
            herder_error_l2: self.herder_error_now()?,
        })
    }

    /// Per-herder commands from the stored field at the current positions.
    pub fn commands(&self) -> Vec<Vec2> {
        let Some(u) = &self.velocity else {
            return vec![[0.0, 0.0]; self.ensemble.herders.len()];
        };
        let raw = sample_at_herders(u, &self.ensemble.herders, self.setup.interpolation);
        match self.setup.max_speed {
            Some(v) => speed_limit(&raw, v),
            None => raw,
        }
    }

    /// Advances one step, updating the control field first when due.
    pub fn advance(&mut self) -> Result<()> {
        if self.step_index.is_multiple_of(self.setup.params.control_period) {
            self.control_update()?;
        }
        let commands = self.commands();
        step(
            &mut self.ensemble,
            &commands,
            &self.setup.params,
            &self.noise,
            self.step_index,
            &self.kernel,
            self.setup.execution,
        )?;
        self.step_index += 1;
        Ok(())
    }

    /// Runs to the horizon. `observer` sees the state before every step and
    /// once more at the end.
    pub fn run(&mut self, mut observer: impl FnMut(&Simulation) -> Result<()>) -> Result<RunRecord> {
        let total = self.total_steps();
        let every = self.setup.metrics_every;
        let mut metrics = Vec::new();
        while self.step_index < total {
            if self.step_index.is_multiple_of(self.setup.params.control_period) {
                self.control_update()?;
            }
            if self.step_index.is_multiple_of(every) {
                metrics.push(self.metric()?);
            }
            observer(self)?;
            let commands = self.commands();
            step(
                &mut self.ensemble,
                &commands,
                &self.setup.params,
                &self.noise,
                self.step_index,
                &self.kernel,
                self.setup.execution,
            )?;
            self.step_index += 1;
        }
        metrics.push(self.metric()?);
        observer(self)?;
        Ok(RunRecord {
            metrics,
            final_ensemble: self.ensemble.clone(),
        })
    }
}

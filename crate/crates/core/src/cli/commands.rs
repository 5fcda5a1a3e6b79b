//! The batch commands behind the `shepherd` binary. Each writes its files
//! into an output directory and reports whether the scenario was feasible.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use log::info;

use super::config::{ContinuumMode, ContinuumStart, ExperimentConfig, FieldFormat};
use super::formats::{self, Metadata, Quantity, TrajectoryWriter};
use crate::continuum::{
    run_coupled, verify_herder_convergence, verify_target_convergence, ContinuumModel, ContinuumState, DecayReport,
    Schedule,
};
use crate::error::{Error, Result};
use crate::feasibility::{
    analyze, feasibility_map, stability_margin, von_mises_density, DeconvolutionOperator, FeasibilityMap,
    FeasibilityReport, FeasibilitySetup,
};
use crate::geometry::TorusPoint;
use crate::grid::{Grid, KernelSamples, ScalarField};
use crate::micro::{containment, match_mass, ContainmentMetric, RunRecord, Simulation, SimulationSetup};

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// `M̂ᴴ ≥ 1` (or no herder count could be chosen).
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Infeasible => 2,
        }
    }
}

/// Loaded configuration plus where results go.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>) -> Self {
        let out = out.unwrap_or_else(|| PathBuf::from(&config.output.directory));
        Context { config, out }
    }

    pub fn metadata(&self) -> Result<Metadata> {
        Ok(Metadata::new(self.config.hash(), self.config.seed, self.config.arena()?))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv_fields(&self) -> bool {
        self.config.output.field_format == FieldFormat::Csv
    }

    fn field_name(&self, stem: &str) -> PathBuf {
        self.path(&format!("{stem}.{}", if self.csv_fields() { "csv" } else { "field" }))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), fmt_f)
}

fn fmt_f(v: f64) -> String {
    // TOML spells these `nan` and `inf`
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:?}")
    }
}

/// Runs the feasibility pipeline for `config` with the deconvolution on
/// `op_grid` and results reported on `control`.
pub fn feasibility_report(config: &ExperimentConfig, op_grid: &Grid, control: &Grid) -> Result<FeasibilityReport> {
    let kernel = config.kernel_params()?;
    let setup = FeasibilitySetup {
        kernel,
        target: config.von_mises(1.0)?,
        diffusion: config.sim.diffusion,
        target_count: config.agents.targets,
        control_grid: control.clone(),
    };
    let op = DeconvolutionOperator::assemble(op_grid, &kernel);
    analyze(&setup, &op)
}

pub fn cmd_feasibility(ctx: &Context) -> Result<(Outcome, FeasibilityReport)> {
    let cfg = &ctx.config;
    let report = feasibility_report(cfg, &Grid::new(cfg.grids.deconvolution)?, &Grid::new(cfg.grids.control)?)?;
    let meta = ctx.metadata()?;
    let csv = ctx.csv_fields();
    formats::write_scalar_field(&ctx.field_name("target_density"), &meta, "target_density", &report.target_density, Quantity::Density, csv)?;
    formats::write_vector_field(&ctx.field_name("desired_velocity"), &meta, "desired_velocity", &report.desired_velocity, Quantity::Velocity, csv)?;
    formats::write_scalar_field(&ctx.field_name("deconvolution"), &meta, "deconvolution", &report.deconvolution, Quantity::Density, csv)?;
    formats::write_scalar_field(&ctx.field_name("herder_density"), &meta, "herder_density", &report.herders.desired_density, Quantity::Density, csv)?;
    let s = &report.stability;
    formats::write_summary(
        &ctx.path("feasibility.toml"),
        &meta,
        &[
            ("minimal_herder_mass", fmt_f(report.minimal_mass())),
            ("lift", fmt_f(report.herders.offset)),
            ("target_count", cfg.agents.targets.to_string()),
            ("herder_count", report.herder_count.map_or("\"infeasible\"".into(), |n| n.to_string())),
            ("feasible", report.is_feasible().to_string()),
            ("deconvolution_residual", fmt_f(report.residual)),
            ("g_sup", fmt_f(s.g_sup)),
            ("k_ff", fmt_f(s.rate)),
            ("certified", s.certified.to_string()),
        ],
    )?;
    info!(
        "minimal herder mass {:.4}, herders {:?}",
        report.minimal_mass(),
        report.herder_count
    );
    let outcome = if report.is_feasible() { Outcome::Success } else { Outcome::Infeasible };
    Ok((outcome, report))
}

/// Builds the agent simulation described by `config`, choosing the herder
/// count by feasibility unless it is overridden. `None` means infeasible.
pub fn simulation_setup(config: &ExperimentConfig) -> Result<Option<(SimulationSetup, FeasibilityReport)>> {
    let control = Grid::new(config.grids.control)?;
    let report = feasibility_report(config, &Grid::new(config.grids.deconvolution)?, &control)?;
    let Some(herders) = config.agents.herders.or(report.herder_count) else {
        return Ok(None);
    };
    let setup = SimulationSetup {
        kernel: config.kernel_params()?,
        kernel_table: config.kernel.table_resolution,
        kde_bandwidth: config.kde.bandwidth,
        kde_order: config.kde.periodization_order,
        goal: config.goal()?,
        params: config.sim_params()?,
        gain: config.gain()?,
        grid: control,
        desired_herder_density: report.herders.desired_density.clone(),
        herder_count: herders as usize,
        target_count: config.agents.targets as usize,
        max_speed: config.sim.max_speed,
        interpolation: config.sim.interpolation,
        execution: config.execution,
        metrics_every: config.output.metrics_every,
    };
    Ok(Some((setup, report)))
}

pub fn cmd_simulate(ctx: &Context) -> Result<(Outcome, Option<RunRecord>)> {
    let cfg = &ctx.config;
    let meta = ctx.metadata()?;
    let Some((setup, report)) = simulation_setup(cfg)? else {
        formats::write_summary(
            &ctx.path("simulate.toml"),
            &meta,
            &[("feasible", "false".into()), ("minimal_herder_mass", fmt_f(report_mass(cfg)?))],
        )?;
        return Ok((Outcome::Infeasible, None));
    };
    let herder_count = setup.herder_count;
    let mut sim = Simulation::new(setup)?;
    formats::write_scalar_field(
        &ctx.field_name("desired_herder_density"),
        &meta,
        "desired_herder_density",
        sim.desired_density(),
        Quantity::Density,
        ctx.csv_fields(),
    )?;
    let mut traj = TrajectoryWriter::create(&ctx.path("trajectory.csv"), &meta)?;
    let every = cfg.output.snapshot_every;
    let total = sim.total_steps();
    let run = sim.run(|s| {
        let k = s.step_index();
        let due = if every == 0 { k == 0 } else { k % every == 0 };
        if due || k == total {
            traj.snapshot(s.time(), s.ensemble())?;
        }
        Ok(())
    })?;
    traj.finish()?;
    let mut last = TrajectoryWriter::create(&ctx.path("final.csv"), &meta)?;
    last.snapshot(sim.time(), &run.final_ensemble)?;
    last.finish()?;
    formats::write_metrics(&ctx.path("metrics.csv"), &meta, &run.metrics)?;
    formats::write_summary(
        &ctx.path("simulate.toml"),
        &meta,
        &[
            ("feasible", "true".into()),
            ("minimal_herder_mass", fmt_f(report.minimal_mass())),
            ("herder_count", herder_count.to_string()),
            ("target_count", cfg.agents.targets.to_string()),
            ("final_time", fmt_f(sim.time())),
            ("final_chi", fmt_f(run.final_chi())),
        ],
    )?;
    info!("final containment {:.1}%", run.final_chi());
    Ok((Outcome::Success, Some(run)))
}

fn report_mass(cfg: &ExperimentConfig) -> Result<f64> {
    let g = Grid::new(cfg.grids.control)?;
    Ok(feasibility_report(cfg, &Grid::new(cfg.grids.deconvolution)?, &g)?.minimal_mass())
}

/// Recomputes containment from a trajectory file.
pub fn analyze_trajectory(config: &ExperimentConfig, path: &Path) -> Result<Vec<ContainmentMetric>> {
    let traj = formats::read_trajectory(path)?;
    let goal = config.goal()?;
    let identity = traj.arena == crate::geometry::ArenaMap::identity();
    let mut series = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let points = snap
            .targets
            .iter()
            .map(|&p| if identity { TorusPoint::new(p[0], p[1]) } else { traj.arena.to_omega(p) })
            .collect::<Result<Vec<_>>>()?;
        series.push(containment(&points, &goal, snap.time)?);
    }
    Ok(series)
}

pub fn cmd_analyze(ctx: &Context, trajectory: &Path) -> Result<(Outcome, Vec<ContainmentMetric>)> {
    let series = analyze_trajectory(&ctx.config, trajectory)?;
    formats::write_containment(&ctx.path("containment.csv"), &ctx.metadata()?, &series)?;
    Ok((Outcome::Success, series))
}

/// The `(k, D)` map of the minimal herder mass.
pub fn cmd_sweep(ctx: &Context) -> Result<(Outcome, FeasibilityMap)> {
    let cfg = &ctx.config;
    let op = DeconvolutionOperator::assemble(&Grid::new(cfg.grids.deconvolution)?, &cfg.kernel_params()?);
    let map = feasibility_map(&cfg.sweep.concentrations, &cfg.sweep.diffusions, &op, &Grid::new(cfg.grids.control)?)?;
    let meta = ctx.metadata()?;
    formats::write_text(&ctx.path("feasibility_map.csv"), &meta, &map.to_csv())?;
    let mut raw = String::from("D,k,minimal_herder_mass\n");
    for (d, row) in map.d_values.iter().zip(&map.values) {
        for (k, v) in map.k_values.iter().zip(row) {
            raw.push_str(&format!("{d},{k},{v}\n"));
        }
    }
    formats::write_text(&ctx.path("feasibility_cells.csv"), &meta, &raw)?;
    Ok((Outcome::Success, map))
}

/// Result of the continuum command.
#[derive(Debug, Clone)]
pub struct ContinuumRun {
    pub report: DecayReport,
    pub herder_mass: f64,
    pub target_mass: f64,
    pub g_sup: f64,
}

fn with_mode(desired: &ScalarField, start: ContinuumStart, mode: ScalarField) -> Result<ScalarField> {
    Ok(match start {
        ContinuumStart::Equilibrium => desired.clone(),
        ContinuumStart::Uniform => ScalarField::constant(desired.grid(), desired.mass() / (TAU * TAU)),
        ContinuumStart::Perturbed => desired.add(&mode)?,
    })
}

pub fn run_continuum(config: &ExperimentConfig) -> Result<Option<ContinuumRun>> {
    let c = &config.continuum;
    let grid = Grid::new(c.grid)?;
    let report = feasibility_report(config, &grid, &grid)?;
    let minimal = report.minimal_mass();
    if minimal >= 1.0 {
        return Ok(None);
    }
    let herder_mass = match config.agents.herders {
        Some(n) => n as f64 / (n + config.agents.targets) as f64,
        None => minimal,
    };
    let target_mass = 1.0 - herder_mass;
    let herders_bar = match_mass(&report.herders.desired_density, herder_mass);
    let targets_bar = von_mises_density(&config.von_mises(target_mass)?, &grid);
    let schedule = Schedule {
        horizon: c.horizon,
        sample_interval: c.sample_interval,
        max_dt: c.max_dt,
    };
    let model = ContinuumModel::new(KernelSamples::new(&grid, &config.kernel_params()?), config.sim.diffusion)?;
    let gain = config.gain()?.value();

    // perturbations scaled to keep the densities nonnegative
    let herder_eps = c.amplitude * herders_bar.mean();
    let herders_bar_lifted = if herders_bar.min() < herder_eps {
        herders_bar.offset(herder_eps - herders_bar.min())
    } else {
        herders_bar.clone()
    };
    let herder_mode = ScalarField::from_fn(&grid, |p| herder_eps * p.x1().cos());
    let target_eps = c.amplitude.min(1.0) * targets_bar.min() / 2.0;
    let target_mode = ScalarField::from_fn(&grid, |p| target_eps * (p.x1().cos() + p.x2().sin()));

    let g_sup = stability_margin(&targets_bar, config.sim.diffusion)?.g_sup;
    let report = match c.mode {
        ContinuumMode::Herders => {
            let initial = with_mode(&herders_bar_lifted, c.start, herder_mode)?;
            verify_herder_convergence(&initial, &herders_bar_lifted, gain, &schedule)?
        }
        ContinuumMode::Targets => {
            let initial = with_mode(&targets_bar, c.start, target_mode)?;
            verify_target_convergence(&model, &initial, &targets_bar, &herders_bar, &schedule, 1e-9)?
        }
        ContinuumMode::Coupled => {
            let h0 = with_mode(&herders_bar_lifted, c.start, herder_mode)?;
            let t0 = with_mode(&targets_bar, c.start, target_mode)?;
            run_coupled(&model, ContinuumState::new(h0, t0)?, &herders_bar_lifted, &targets_bar, gain, &schedule)?
        }
    };
    Ok(Some(ContinuumRun {
        report,
        herder_mass,
        target_mass,
        g_sup,
    }))
}

pub fn cmd_continuum(ctx: &Context) -> Result<(Outcome, Option<ContinuumRun>)> {
    let meta = ctx.metadata()?;
    let Some(run) = run_continuum(&ctx.config)? else {
        formats::write_summary(&ctx.path("continuum.toml"), &meta, &[("feasible", "false".into())])?;
        return Ok((Outcome::Infeasible, None));
    };
    let r = &run.report;
    formats::write_decay(&ctx.path("decay.csv"), &meta, &r.records)?;
    let csv = ctx.csv_fields();
    formats::write_scalar_field(&ctx.field_name("final_herders"), &meta, "final_herders", &r.final_state.herders, Quantity::Density, csv)?;
    formats::write_scalar_field(&ctx.field_name("final_targets"), &meta, "final_targets", &r.final_state.targets, Quantity::Density, csv)?;
    let mode = match ctx.config.continuum.mode {
        ContinuumMode::Herders => "herders",
        ContinuumMode::Targets => "targets",
        ContinuumMode::Coupled => "coupled",
    };
    formats::write_summary(
        &ctx.path("continuum.toml"),
        &meta,
        &[
            ("feasible", "true".into()),
            ("mode", format!("\"{mode}\"")),
            ("herder_mass", fmt_f(run.herder_mass)),
            ("target_mass", fmt_f(run.target_mass)),
            ("g_sup", fmt_f(run.g_sup)),
            ("expected_rate", fmt_f(r.expected_rate)),
            ("fitted_rate", fmt_opt(r.fitted_rate)),
            ("certified", r.certified.to_string()),
            ("bound_satisfied", r.bound_satisfied.map_or("\"not_applicable\"".into(), |b| b.to_string())),
            ("mass_drift", fmt_f(r.mass_drift)),
            ("dt", fmt_f(r.dt)),
        ],
    )?;
    if r.bound_satisfied == Some(false) {
        return Err(Error::Verification("target error left the certified envelope".into()));
    }
    Ok((Outcome::Success, Some(run)))
}

//! Configuration, file formats and the batch commands behind the `shepherd`
//! binary.
//!
//! ```text
//! shepherd feasibility --config reference.toml --out out/
//! shepherd simulate    --config reference.toml --seed 3 --out out/
//! shepherd continuum   --config herder_convergence.toml
//! shepherd analyze     --config reference.toml --trajectory out/trajectory.csv
//! shepherd sweep       --config reference.toml --out fig/
//! ```
//!
//! Exit codes: 0 on success, 2 when the scenario is infeasible, 1 on any
//! error.

pub mod commands;
pub mod config;
pub mod formats;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{Context, Outcome};
pub use config::ExperimentConfig;

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "shepherd", version, about = "Continuum shepherding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML experiment configuration; built-in defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output.directory`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write positions and fields in `[-w, w]²` coordinates.
    #[arg(long, value_name = "W")]
    pub rescale_arena: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimal herder mass and herder count.
    Feasibility(CommonArgs),
    /// Closed-loop agent simulation.
    Simulate(CommonArgs),
    /// Continuum convergence checks.
    Continuum(CommonArgs),
    /// Recompute containment from a trajectory file.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Minimal herder mass over a grid of concentrations and diffusions.
    Sweep(CommonArgs),
}

impl CommonArgs {
    /// Loads the configuration and applies the command-line overrides.
    pub fn context(&self) -> Result<Context> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(w) = self.rescale_arena {
            config.domain.arena_half_width = Some(w);
        }
        config.validate()?;
        Ok(Context::new(config, self.out.clone()))
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome> {
    Ok(match &cli.command {
        Command::Feasibility(a) => commands::cmd_feasibility(&a.context()?)?.0,
        Command::Simulate(a) => commands::cmd_simulate(&a.context()?)?.0,
        Command::Continuum(a) => commands::cmd_continuum(&a.context()?)?.0,
        Command::Analyze { common, trajectory } => commands::cmd_analyze(&common.context()?, trajectory)?.0,
        Command::Sweep(a) => commands::cmd_sweep(&a.context()?)?.0,
    })
}

/// Parses `args`, runs the command and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

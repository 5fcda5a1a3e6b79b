//! Closed-loop agent simulation: herders steer diffusing targets into the
//! goal disc. Prints the containment percentage over time.
//!
//! ```text
//! cargo run --release --example containment -- [targets] [herders] [horizon] [seed]
//! ```
//! Defaults to a desk-scale run with 180 targets and 70 herders.

use std::f64::consts::PI;
use std::time::Instant;

use shepherd::controller::{ControlGain, Interpolation};
use shepherd::feasibility::{analyze, DeconvolutionOperator, FeasibilitySetup, GoalRegion, VonMisesSpec};
use shepherd::micro::{SimParams, Simulation, SimulationSetup};
use shepherd::{Execution, Grid, KernelParams, TorusPoint};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> shepherd::Result<()> {
    let targets: usize = arg(1, 180);
    let herders: usize = arg(2, 70);
    let horizon: f64 = arg(3, 200.0);
    let seed: u64 = arg(4, 1);

    let kernel = KernelParams::new(PI, 2)?;
    let goal = GoalRegion::new(TorusPoint::ORIGIN, PI / 2.0)?;
    let grid = Grid::new(64)?;
    let feas = FeasibilitySetup {
        kernel,
        target: VonMisesSpec::for_goal(&goal, 1.0)?,
        diffusion: 0.01,
        target_count: targets as u64,
        control_grid: grid.clone(),
    };
    let report = analyze(&feas, &DeconvolutionOperator::assemble(&Grid::new(25)?, &kernel))?;
    println!("feasibility suggests {:?} herders; using {herders}", report.herder_count);

    let setup = SimulationSetup {
        kernel,
        kernel_table: 256,
        kde_bandwidth: 0.4,
        kde_order: 2,
        goal,
        params: SimParams { diffusion: 0.01, dt: 0.01, horizon, seed, control_period: 1 },
        gain: ControlGain::new(10.0)?,
        grid,
        desired_herder_density: report.herders.desired_density,
        herder_count: herders,
        target_count: targets,
        max_speed: None,
        interpolation: Interpolation::Bilinear,
        execution: Execution::Sequential,
        metrics_every: 1000,
    };
    let start = Instant::now();
    let mut sim = Simulation::new(setup)?;
    let run = sim.run(|_| Ok(()))?;
    for m in &run.metrics {
        println!(
            "t = {:6.1}  χ = {:5.1}%  ‖eᴴ‖₂ = {:.4}",
            m.containment.time, m.containment.chi, m.herder_error_l2
        );
    }
    println!("final χ = {:.1}% after {:.2?}", run.final_chi(), start.elapsed());
    Ok(())
}

//! Minimal herder mass and herder count for the reference scenario.
//!
//! ```text
//! cargo run --release --example feasibility
//! ```

use std::f64::consts::PI;
use std::time::Instant;

use shepherd::feasibility::{analyze, DeconvolutionOperator, FeasibilitySetup, GoalRegion, VonMisesSpec};
use shepherd::{Grid, KernelParams, TorusPoint};

fn main() -> shepherd::Result<()> {
    let kernel = KernelParams::new(PI, 2)?;
    let goal = GoalRegion::new(TorusPoint::ORIGIN, PI / 2.0)?;
    let setup = FeasibilitySetup {
        kernel,
        target: VonMisesSpec::for_goal(&goal, 1.0)?,
        diffusion: 0.01,
        target_count: 720,
        control_grid: Grid::new(64)?,
    };

    let start = Instant::now();
    let op = DeconvolutionOperator::assemble(&Grid::new(25)?, &kernel);
    println!("operator (M_d = 25) assembled in {:.2?}", start.elapsed());

    let report = analyze(&setup, &op)?;
    println!("deconvolution residual  {:.3e}", report.residual);
    println!("lift A                  {:.5}", report.herders.offset);
    println!("minimal herder mass     {:.5}", report.minimal_mass());
    match report.herder_count {
        Some(n) => println!("herders for 720 targets {n}"),
        None => println!("infeasible: minimal mass >= 1"),
    }
    println!(
        "‖G‖∞ = {:.3}, certified: {}",
        report.stability.g_sup, report.stability.certified
    );
    println!("total {:.2?}", start.elapsed());
    Ok(())
}

//! Targets driven by a frozen desired herder density converge to the von
//! Mises target density, under the envelope `e^{−Kᶠᶠ t}` when it applies.
//!
//! ```text
//! cargo run --release --example target_decay -- [k] [D]
//! ```

use std::f64::consts::{PI, TAU};

use shepherd::continuum::{verify_target_convergence, ContinuumModel, Schedule};
use shepherd::feasibility::{analyze, von_mises_density, DeconvolutionOperator, FeasibilitySetup, VonMisesSpec};
use shepherd::grid::KernelSamples;
use shepherd::micro::match_mass;
use shepherd::{Grid, KernelParams, ScalarField};

fn arg(i: usize, default: f64) -> f64 {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> shepherd::Result<()> {
    let k = arg(1, 0.5);
    let d = arg(2, 0.05);
    let kernel = KernelParams::new(PI, 2)?;
    let grid = Grid::new(25)?;
    let setup = FeasibilitySetup {
        kernel,
        target: VonMisesSpec::new([k, k], [0.0, 0.0], 1.0, false)?,
        diffusion: d,
        target_count: 720,
        control_grid: grid.clone(),
    };
    let report = analyze(&setup, &DeconvolutionOperator::assemble(&grid, &kernel))?;
    let mh = report.minimal_mass();
    if mh >= 1.0 {
        println!("infeasible: minimal herder mass {mh:.3}");
        return Ok(());
    }
    let herders = match_mass(&report.herders.desired_density, mh);
    let targets = von_mises_density(&VonMisesSpec::new([k, k], [0.0, 0.0], 1.0 - mh, false)?, &grid);
    let uniform = ScalarField::constant(&grid, (1.0 - mh) / (TAU * TAU));

    let model = ContinuumModel::new(KernelSamples::new(&grid, &kernel), d)?;
    let schedule = Schedule { horizon: 20.0, sample_interval: 1.0, max_dt: None };
    let r = verify_target_convergence(&model, &uniform, &targets, &herders, &schedule, 0.0)?;
    println!("‖G‖∞ = {:.3}, Kff = {:.4}, certified: {}", report.stability.g_sup, r.expected_rate, r.certified);
    println!("{:>6} {:>14} {:>14}", "t", "|e_T|_2^2", "envelope");
    for rec in &r.records {
        println!("{:>6.1} {:>14.6e} {:>14.6e}", rec.time, rec.target_error_l2.powi(2), rec.bound.powi(2));
    }
    println!("fitted rate {:.4}, within envelope: {:?}", r.fitted_rate.unwrap_or(f64::NAN), r.bound_satisfied);
    Ok(())
}

//! Continuum herder feedback loop: the density error decays like `e^{−Kt}`.
//!
//! ```text
//! cargo run --release --example herder_decay -- [gain]
//! ```

use std::f64::consts::PI;

use shepherd::continuum::{verify_herder_convergence, Schedule};
use shepherd::{Grid, ScalarField};

fn main() -> shepherd::Result<()> {
    let gain: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let grid = Grid::new(32)?;
    let mean = 0.3 / (4.0 * PI * PI);
    let desired = ScalarField::from_fn(&grid, |p| mean * (1.0 + 0.5 * p.x1().cos() * p.x2().cos()));
    let initial = desired.add(&ScalarField::from_fn(&grid, |p| 0.2 * mean * (2.0 * p.x2()).sin()))?;
    let schedule = Schedule {
        horizon: 3.0 / gain,
        sample_interval: 0.25 / gain,
        max_dt: None,
    };
    let report = verify_herder_convergence(&initial, &desired, gain, &schedule)?;
    println!("{:>8} {:>14} {:>14}", "t", "|e_H|_2", "e^{-Kt}|e0|");
    let e0 = report.records[0].herder_error_l2;
    for r in &report.records {
        println!("{:>8.3} {:>14.6e} {:>14.6e}", r.time, r.herder_error_l2, e0 * (-gain * r.time).exp());
    }
    println!("fitted rate {:.6} (gain {gain}), dt {:.2e}, mass drift {:.1e}", report.fitted_rate.unwrap_or(f64::NAN), report.dt, report.mass_drift);
    Ok(())
}

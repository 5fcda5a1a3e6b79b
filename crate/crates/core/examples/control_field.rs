//! One control tick by hand: density estimate of a herder cloud, density
//! error against a desired profile, Poisson solve and per-herder commands.
//!
//! ```text
//! cargo run --release --example control_field
//! ```

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shepherd::controller::{control_field, herder_error, sample_at_herders, ControlGain, Interpolation};
use shepherd::grid::divergence;
use shepherd::kde::{estimate_density, KdeParams};
use shepherd::{Grid, ScalarField, TorusPoint};

fn main() -> shepherd::Result<()> {
    let grid = Grid::new(64)?;
    let mass = 0.28;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // herders clustered off-centre
    let herders: Vec<TorusPoint> = (0..200)
        .map(|_| TorusPoint::new(1.0 + rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)))
        .collect::<shepherd::Result<_>>()?;

    let estimate = estimate_density(&herders, &KdeParams::new(0.4, 2, mass)?, &grid)?;
    let norm = mass / (4.0 * PI * PI);
    let desired = ScalarField::from_fn(&grid, |p| norm * (1.0 + 0.8 * p.x1().cos()));
    let error = herder_error(&desired, &estimate)?;
    let gain = ControlGain::new(10.0)?;
    let fields = control_field(&error, &estimate, gain)?;

    let residual = divergence(&fields.flux).add(&error.field().offset(-error.mean()).scaled(gain.value()))?;
    println!("estimate mass {:.6}, error L2 {:.4e}", estimate.mass(), error.l2_norm());
    println!("max |div w + K e| = {:.2e}", residual.max_abs());
    let commands = sample_at_herders(&fields.velocity, &herders, Interpolation::Bilinear);
    let fastest = commands.iter().map(|u| u[0].hypot(u[1])).fold(0.0, f64::max);
    println!("max |u| at the herders = {fastest:.3}");
    for (h, u) in herders.iter().zip(commands).take(5) {
        println!("herder at ({:+.3}, {:+.3}) -> u = ({:+.4}, {:+.4})", h.x1(), h.x2(), u[0], u[1]);
    }
    Ok(())
}

//! Minimal herder mass over target concentration `k` and diffusion `D`,
//! printed as a table. Cells at or above 1 are infeasible.
//!
//! ```text
//! cargo run --release --example feasibility_map
//! ```

use std::f64::consts::PI;

use shepherd::feasibility::{feasibility_map, DeconvolutionOperator};
use shepherd::{Grid, KernelParams};

fn main() -> shepherd::Result<()> {
    let ks: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    let ds: Vec<f64> = (1..=10).map(|i| 0.005 * i as f64).collect();
    let op = DeconvolutionOperator::assemble(&Grid::new(25)?, &KernelParams::new(PI, 2)?);
    let map = feasibility_map(&ks, &ds, &op, &Grid::new(64)?)?;

    print!("   D \\ k");
    for k in &ks {
        print!("{k:>6.2}");
    }
    println!();
    for (d, row) in ds.iter().zip(&map.values) {
        print!("{d:>8.3}");
        for v in row {
            if *v >= 1.0 {
                print!("{:>6}", "x");
            } else {
                print!("{v:>6.3}");
            }
        }
        println!();
    }
    Ok(())
}

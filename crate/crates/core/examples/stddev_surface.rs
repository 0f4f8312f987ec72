//! Sweeps usage and adherence and prints the final residual spread as a table.
//!
//! cargo run --release --example stddev_surface

use loopsim::data::generate_linear;
use loopsim::diagnostics::stddev_surface;
use loopsim::sim::LoopConfig;

fn main() -> loopsim::Result<()> {
    let data = generate_linear(500, 10, 1.0, 7)?;
    let cfg = LoopConfig {
        total_steps: 2000,
        repeats: 3,
        seed: 1,
        ..LoopConfig::sampling_update()
    };
    let p_grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let s_grid = [0.0, 0.75, 1.5, 2.25, 3.0];
    let surface = stddev_surface(&data, &p_grid, &s_grid, &cfg)?;

    print!("{:>8}", "p \\ s");
    for s in s_grid {
        print!("{s:>11}");
    }
    println!();
    for (pi, p) in p_grid.iter().enumerate() {
        print!("{p:>8}");
        for si in 0..s_grid.len() {
            match surface.cell(pi, si).mean_stddev {
                Some(v) => print!("{v:>11.4}"),
                None => print!("{:>11}", "failed"),
            }
        }
        println!();
    }
    Ok(())
}

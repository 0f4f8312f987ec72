//! Builds an empirical distribution from residual-like draws and reports the
//! DKW confidence band, kernel density and interval masses.
//!
//! cargo run --example dkw_band

use loopsim::density::{dkw_epsilon, EmpiricalDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> loopsim::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 2.0).expect("valid sd");
    let sample: Vec<f64> = (0..500).map(|_| normal.sample(&mut rng)).collect();
    let dist = EmpiricalDistribution::new(sample)?;

    let eps = dkw_epsilon(0.05, dist.len())?;
    println!(
        "n={} sd={:.3} bandwidth={:.4}",
        dist.len(),
        dist.std_dev(),
        dist.silverman_bandwidth()
    );
    println!("95% DKW band: F_n(x) +/- {eps:.4}");
    for x in [-2.0, 0.0, 2.0] {
        let f = dist.ecdf(x);
        println!(
            "  F_n({x:+}) = {f:.3}  in [{:.3}, {:.3}]",
            (f - eps).max(0.0),
            (f + eps).min(1.0)
        );
    }
    let f0 = dist.density_at(0.0)?.finite().unwrap_or(f64::NAN);
    println!(
        "kde f(0) = {f0:.4} (true {:.4})",
        1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())
    );
    for kappa in [0.1, 0.5, 1.0] {
        println!("mass of [-{kappa}, {kappa}] = {:.3}", dist.interval_mass(kappa)?);
    }
    Ok(())
}

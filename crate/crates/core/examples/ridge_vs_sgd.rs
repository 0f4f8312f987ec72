//! Fits the three regressors to the same data and compares held-out error.
//!
//! cargo run --example ridge_vs_sgd

use loopsim::data::generate_linear;
use loopsim::regress::{fit_ridge, fit_sgd, SgdParams};

fn main() -> loopsim::Result<()> {
    let data = generate_linear(2000, 10, 1.0, 3)?;
    let idx: Vec<usize> = (0..data.rows()).collect();
    let (train, test) = (data.subset(&idx[..1600]), data.subset(&idx[1600..]));

    let exact = fit_ridge(&train, 0.0)?;
    let penalized = fit_ridge(&train, 0.1)?;
    let sgd = fit_sgd(&train, &SgdParams::default(), 3)?;

    // noise variance is 1, so a good fit sits near 1.0
    for (name, model) in [("ridge (exact)", &exact), ("ridge (0.1)", &penalized), ("sgd", &sgd)] {
        println!(
            "{name:<14} test mse {:.4}  intercept {:+.4}",
            model.mse(&test)?,
            model.intercept
        );
    }
    println!("sgd stopped after {} passes", sgd.iterations_used);
    Ok(())
}

//! Explores the envelope map directly: weak limits against a test function,
//! the transformation check, and the operator-norm lower bound.
//!
//! cargo run --example analytic_envelope

use loopsim::analytic::{
    operator_norm_lower_bound, verify_transformation, weak_limit_probe, AnalyticMap, DensityFn, PsiSequence, Rescale,
    TestFunction,
};

fn main() -> loopsim::Result<()> {
    let phi = TestFunction::triangle();
    let steps = [0, 5, 10, 20, 40];
    for (name, a) in [("growing", 1.2), ("shrinking", 0.8)] {
        let map = AnalyticMap::new(DensityFn::gaussian(0.0, 1.0), PsiSequence::power(a));
        let vals = weak_limit_probe(&map, &phi, &steps)?;
        // growing scale concentrates mass at 0 and tends to phi(0) = 1
        println!("{name:<10} integral of f_t * phi: {vals:.4?}");
    }

    let base = DensityFn::gaussian(0.0, 1.0);
    for factor in [0.5, 1.0, 3.0] {
        let check = verify_transformation(&Rescale { factor }, &base);
        let bound = operator_norm_lower_bound(&Rescale { factor }, 0.0, 1.0, 2.0)?;
        println!(
            "rescale by {factor}: maps densities to densities = {}, norm >= {bound:.4}",
            check.is_transformation
        );
    }
    Ok(())
}

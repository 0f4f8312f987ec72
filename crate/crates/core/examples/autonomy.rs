//! Checks whether the loop behaves as an autonomous system.
//!
//! An autonomous loop scales the residual density by the same factor every
//! step, so ln f(0) grows linearly. The analytic check tests the
//! multiplicative identity on candidate scaling sequences directly.
//!
//! cargo run --release --example autonomy

use loopsim::analytic::{autonomy_check, PsiSequence};
use loopsim::data::generate_linear;
use loopsim::diagnostics::autonomy_fit;
use loopsim::sim::{self, LoopConfig, ProbeConfig, ProbeSchedule};

fn main() -> loopsim::Result<()> {
    for (name, psi, horizon) in [
        ("2^t", PsiSequence::power(2.0), 20),
        ("0.5^t", PsiSequence::power(0.5), 20),
        ("t", PsiSequence::linear(), 2),
    ] {
        let c = autonomy_check(&psi, horizon, 1e-9)?;
        println!(
            "{name:<6} autonomous={} worst violation {:.2e}",
            c.autonomous, c.max_violation
        );
    }

    let data = generate_linear(500, 10, 1.0, 7)?;
    for (base, steps, every) in [
        (LoopConfig::sampling_update(), 3000, 50),
        (LoopConfig::sliding_window(), 350, 10),
    ] {
        let cfg = LoopConfig {
            total_steps: steps,
            repeats: 5,
            seed: 1,
            ..base.with_feedback(1.0, 3.0)
        };
        let probes = ProbeConfig {
            schedule: ProbeSchedule::Every(every),
            ..ProbeConfig::for_setting(cfg.setting)
        };
        let report = sim::run(&data, &cfg, &probes)?;
        let fit = autonomy_fit(&report.psi_points(), (0, steps))?;
        println!(
            "{:<8} slope {:+.5}/step  r2 {:.4}  heteroscedasticity p {:.3}",
            cfg.setting.as_str(),
            fit.slope,
            fit.r2,
            fit.bp_pvalue
        );
    }
    Ok(())
}

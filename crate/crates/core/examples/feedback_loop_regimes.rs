//! Runs the sampling-update loop in its three regimes and prints how the
//! residual density at zero evolves.
//!
//! With full usage and no adherence the residuals collapse towards a spike.
//! With strong adherence they spread out and the density at zero vanishes.
//! A light touch leaves them roughly where they started.
//!
//! cargo run --release --example feedback_loop_regimes

use loopsim::data::generate_linear;
use loopsim::sim::{self, LoopConfig, ProbeConfig, ProbeSchedule};

fn main() -> loopsim::Result<()> {
    let data = generate_linear(500, 10, 1.0, 7)?;
    for (label, p, s) in [
        ("positive loop", 1.0, 0.0),
        ("amplification", 1.0, 3.0),
        ("neutral", 0.1, 0.9),
    ] {
        let cfg = LoopConfig {
            total_steps: 3000,
            repeats: 5,
            seed: 1,
            ..LoopConfig::sampling_update().with_feedback(p, s)
        };
        let probes = ProbeConfig {
            schedule: ProbeSchedule::Every(500),
            ..ProbeConfig::for_setting(cfg.setting)
        };
        let report = sim::run(&data, &cfg, &probes)?;
        let psi: Vec<String> = report
            .psi_trace
            .mean
            .iter()
            .map(|v| v.map_or("spike".into(), |v| format!("{v:.3}")))
            .collect();
        println!("{label:<14} p={p} s={s}: f(0) over steps {:?}", report.probe_steps);
        println!("{:<14} {}", "", psi.join("  "));
    }
    Ok(())
}

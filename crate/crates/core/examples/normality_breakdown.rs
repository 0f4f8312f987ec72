//! Tracks the normality p-value of the residuals under a positive feedback
//! loop. Residuals start Gaussian and lose normality as they collapse.
//!
//! cargo run --release --example normality_breakdown

use loopsim::data::generate_linear;
use loopsim::harness::experiment::normality_breakdown;
use loopsim::sim::{self, LoopConfig, ProbeConfig, ProbeSchedule};

fn main() -> loopsim::Result<()> {
    let data = generate_linear(500, 10, 1.0, 7)?;
    let cfg = LoopConfig {
        total_steps: 3000,
        repeats: 5,
        seed: 1,
        ..LoopConfig::sampling_update().with_feedback(1.0, 0.0)
    };
    let probes = ProbeConfig {
        schedule: ProbeSchedule::Every(250),
        ..ProbeConfig::for_setting(cfg.setting)
    };
    let report = sim::run(&data, &cfg, &probes)?;
    for r in &report.repeats {
        let p: Vec<String> = r
            .probes
            .iter()
            .map(|p| p.normality_p.map_or("-".into(), |v| format!("{v:.0e}")))
            .collect();
        println!("repeat {}: {}", r.repeat, p.join(" "));
    }
    let (start, late) = normality_breakdown(&report);
    println!("normal at step 0 in {start}/5 repeats, rejected through the last third in {late}/5");
    Ok(())
}

//! Compares simulated moment decay with the analytic envelope map.
//!
//! cargo run --release --example moment_decay

use loopsim::analytic::{gaussian_raw_moment_ln, moment_scaling_predict, quadrature_moment};
use loopsim::analytic::{AnalyticMap, DensityFn, PsiSequence};
use loopsim::data::generate_linear;
use loopsim::sim::{self, LoopConfig, ProbeConfig, ProbeSchedule};

fn main() -> loopsim::Result<()> {
    let data = generate_linear(500, 10, 1.0, 7)?;
    let cfg = LoopConfig {
        total_steps: 350,
        repeats: 5,
        seed: 1,
        ..LoopConfig::sliding_window().with_feedback(1.0, 0.0)
    };
    let probes = ProbeConfig {
        schedule: ProbeSchedule::Every(50),
        ..ProbeConfig::for_setting(cfg.setting)
    };
    let report = sim::run(&data, &cfg, &probes)?;
    println!("sliding window, sum of |nu_k| over 300 orders:");
    for (step, v) in report.probe_steps.iter().zip(&report.moment_l1_trace.mean) {
        println!("  step {step:>4}: {}", v.map_or("-".into(), |v| format!("{v:.3e}")));
    }

    let map = AnalyticMap::new(DensityFn::gaussian(0.0, 1.0), PsiSequence::power(1.1));
    println!("envelope map with psi_t = 1.1^t, even moments:");
    for t in [0, 10, 25, 50] {
        let row: Vec<String> = [2, 4, 6]
            .iter()
            .map(|&k| {
                let nu0 = gaussian_raw_moment_ln(1.0, k).map_or(0.0, f64::exp);
                let q = quadrature_moment(&map, k, t).unwrap_or(f64::NAN);
                format!("nu{k}={q:.3e} (pred {:.3e})", moment_scaling_predict(&map, k, t, nu0))
            })
            .collect();
        println!("  t={t:>2}: {}", row.join("  "));
    }
    Ok(())
}

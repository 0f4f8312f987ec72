//! Fast in-process checks of the statistical and analytic building blocks,
//! runnable from the installed binary without the test harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::analytic::gaussian_raw_moment_ln;
use crate::analytic::{
    autonomy_check, moment_scaling_predict, operator_norm_lower_bound, quadrature_abs_moment, quadrature_moment,
    AnalyticMap, DensityFn, Identity, PsiSequence, Rescale,
};
use crate::data::generate_linear;
use crate::density::{dkw_epsilon, EmpiricalDistribution};
use crate::diagnostics::{breusch_pagan, normality_test};
use crate::harness::config::ExperimentConfig;
use crate::sim::{self, LoopConfig, ProbeConfig};

pub struct Check {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dkw_band_coverage() -> Result<(), String> {
    let (alpha, n, trials) = (0.1, 500, 200);
    let eps = dkw_epsilon(alpha, n).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let misses = (0..trials)
        .filter(|_| {
            let d = EmpiricalDistribution::new((0..n).map(|_| rng.random::<f64>()).collect()).expect("finite sample");
            d.ks_distance(|x| x.clamp(0.0, 1.0)) > eps
        })
        .count();
    let rate = misses as f64 / trials as f64;
    let bound = alpha + 3.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt();
    ensure(rate <= bound, || format!("miss rate {rate} above {bound}"))
}

fn normality_calibration() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rejections = 0;
    for _ in 0..200 {
        if normality_test(&normals(&mut rng, 5000))
            .map_err(|e| e.to_string())?
            .pvalue
            < 0.05
        {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 200.0;
    ensure((0.01..=0.10).contains(&rate), || format!("rejection rate {rate}"))
}

fn breusch_pagan_calibration() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let t: Vec<f64> = (0..500).map(|i| i as f64).collect();
    let mut rejections = 0;
    for _ in 0..200 {
        if breusch_pagan(&normals(&mut rng, 500), &t)
            .map_err(|e| e.to_string())?
            .pvalue
            < 0.05
        {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / 200.0;
    ensure((0.01..=0.10).contains(&rate), || format!("rejection rate {rate}"))
}

fn autonomy_of_powers() -> Result<(), String> {
    for a in [0.5, 1.0, 2.0] {
        let c = autonomy_check(&PsiSequence::power(a), 20, 1e-9).map_err(|e| e.to_string())?;
        ensure(c.autonomous, || {
            format!("power {a} rejected, violation {}", c.max_violation)
        })?;
    }
    let c = autonomy_check(&PsiSequence::linear(), 2, 1e-9).map_err(|e| e.to_string())?;
    ensure(!c.autonomous, || "linear sequence accepted".into())
}

fn operator_norm_bounds() -> Result<(), String> {
    let cases: [(&dyn crate::analytic::DensityTransform, f64, f64); 3] = [
        (&Identity, 1.0, 1.0),
        (&Rescale { factor: 2.0 }, 2.0, 1.0),
        (&Rescale { factor: 0.5 }, f64::INFINITY, 0.5),
    ];
    for (map, q, expected) in cases {
        let got = operator_norm_lower_bound(map, 0.0, 1.0, q).map_err(|e| e.to_string())?;
        ensure((got - expected).abs() < 1e-6, || format!("q={q}: {got} vs {expected}"))?;
    }
    Ok(())
}

fn moment_scaling() -> Result<(), String> {
    let map = AnalyticMap::new(DensityFn::gaussian(0.0, 1.0), PsiSequence::power(1.1));
    for t in [0, 10, 50] {
        for k in 1..=6 {
            let nu0 = gaussian_raw_moment_ln(1.0, k).map_or(0.0, f64::exp);
            let pred = moment_scaling_predict(&map, k, t, nu0);
            let got = quadrature_moment(&map, k, t).map_err(|e| e.to_string())?;
            let scale = quadrature_abs_moment(&map, k, t).map_err(|e| e.to_string())?;
            ensure((got - pred).abs() <= 1e-6 * scale, || {
                format!("t={t} k={k}: {got} vs {pred}")
            })?;
        }
    }
    Ok(())
}

fn loop_determinism() -> Result<(), String> {
    let data = generate_linear(200, 3, 1.0, 5).map_err(|e| e.to_string())?;
    let cfg = LoopConfig {
        total_steps: 300,
        repeats: 3,
        seed: 4,
        ..LoopConfig::sampling_update().with_feedback(0.8, 1.0)
    };
    let probes = ProbeConfig::for_setting(cfg.setting);
    let a = sim::run(&data, &cfg, &probes).map_err(|e| e.to_string())?;
    let b = sim::run(&data, &cfg, &probes).map_err(|e| e.to_string())?;
    ensure(a == b, || "two runs with one seed differ".into())
}

fn config_roundtrip() -> Result<(), String> {
    let c = ExperimentConfig::parse("experiment = sweep\nusage_grid = 0:1:0.25\nsegments = 0-100\n")
        .map_err(|e| e.to_string())?;
    let once = c.to_text();
    let twice = ExperimentConfig::parse(&once).map_err(|e| e.to_string())?.to_text();
    ensure(once == twice, || "serialization is not idempotent".into())
}

fn kde_equivariance() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = normals(&mut rng, 1000);
    let c = 3.5;
    let a = EmpiricalDistribution::new(x.clone()).map_err(|e| e.to_string())?;
    let b = EmpiricalDistribution::new(x.iter().map(|v| v * c).collect()).map_err(|e| e.to_string())?;
    let fa = a
        .density_at(0.0)
        .map_err(|e| e.to_string())?
        .finite()
        .unwrap_or(f64::NAN);
    let fb = b
        .density_at(0.0)
        .map_err(|e| e.to_string())?
        .finite()
        .unwrap_or(f64::NAN);
    ensure((fa - c * fb).abs() <= 1e-9 * fa, || format!("{fa} vs {}", c * fb))
}

pub const CHECKS: &[Check] = &[
    Check {
        name: "dkw_band_coverage",
        run: dkw_band_coverage,
    },
    Check {
        name: "normality_null_calibration",
        run: normality_calibration,
    },
    Check {
        name: "breusch_pagan_null_calibration",
        run: breusch_pagan_calibration,
    },
    Check {
        name: "autonomy_of_power_sequences",
        run: autonomy_of_powers,
    },
    Check {
        name: "operator_norm_lower_bounds",
        run: operator_norm_bounds,
    },
    Check {
        name: "moment_scaling_by_quadrature",
        run: moment_scaling,
    },
    Check {
        name: "loop_determinism",
        run: loop_determinism,
    },
    Check {
        name: "config_roundtrip",
        run: config_roundtrip,
    },
    Check {
        name: "kde_scale_equivariance",
        run: kde_equivariance,
    },
];

/// Runs every check, printing one line each; returns the number of failures.
pub fn run_all(out: &mut dyn std::io::Write) -> usize {
    let mut failures = 0;
    for c in CHECKS {
        match (c.run)() {
            Ok(()) => {
                let _ = writeln!(out, "PASS {}", c.name);
            }
            Err(msg) => {
                failures += 1;
                let _ = writeln!(out, "FAIL {}: {msg}", c.name);
            }
        }
    }
    failures
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        let mut buf = Vec::new();
        let failures = super::run_all(&mut buf);
        assert_eq!(failures, 0, "{}", String::from_utf8_lossy(&buf));
    }
}

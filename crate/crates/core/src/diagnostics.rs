//! Statistical tests and fits applied to loop output.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regress::{fit_huber_line, HUBER_DELTA};
use crate::sim::{self, LoopConfig, ProbeConfig, ProbeSchedule, RepeatTrace};

/// Per-probe mean and standard deviation across repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub mean: Vec<Option<f64>>,
    pub sd: Vec<Option<f64>>,
}

impl Trace {
    fn from_columns(cols: Vec<Vec<f64>>) -> Self {
        let (mut mean, mut sd) = (Vec::new(), Vec::new());
        for c in cols {
            let c: Vec<f64> = c.into_iter().filter(|v| v.is_finite()).collect();
            if c.is_empty() {
                mean.push(None);
                sd.push(None);
                continue;
            }
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let v = if c.len() > 1 {
                c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64
            } else {
                0.0
            };
            mean.push(Some(m));
            sd.push(Some(v.sqrt()));
        }
        Trace { mean, sd }
    }

    pub fn first(&self) -> Option<f64> {
        self.mean.first().copied().flatten()
    }

    pub fn last(&self) -> Option<f64> {
        self.mean.last().copied().flatten()
    }
}

/// Repeat-aggregated time series from one loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub probe_steps: Vec<u64>,
    pub psi_trace: Trace,
    /// One trace per configured interval half-width, in configuration order.
    pub interval_masses: Vec<Trace>,
    pub stddev_trace: Trace,
    pub mean_abs_trace: Trace,
    /// Raw moments `ν_1, ν_2, …` in order.
    pub moment_traces: Vec<Trace>,
    pub moment_l1_trace: Trace,
    pub normality_pvalues: Trace,
    pub config_echo: LoopConfig,
    pub repeats_aggregated: u32,
    pub repeats: Vec<RepeatTrace>,
}

impl DiagnosticsReport {
    /// Aligns repeats probe by probe; all repeats share one schedule.
    pub fn aggregate(config: LoopConfig, repeats: Vec<RepeatTrace>) -> Self {
        let probe_steps: Vec<u64> = repeats
            .first()
            .map(|r| r.probes.iter().map(|p| p.step).collect())
            .unwrap_or_default();
        let n = probe_steps.len();
        let column = |f: &dyn Fn(&sim::ProbeRecord) -> Option<f64>| -> Trace {
            Trace::from_columns(
                (0..n)
                    .map(|i| repeats.iter().filter_map(|r| r.probes.get(i).and_then(f)).collect())
                    .collect(),
            )
        };
        let n_kappa = repeats.first().map_or(0, |r| r.kappas.len());
        let n_moments = repeats
            .first()
            .and_then(|r| r.probes.first())
            .map_or(0, |p| p.moments.len());
        DiagnosticsReport {
            psi_trace: column(&|p| p.psi),
            interval_masses: (0..n_kappa)
                .map(|k| column(&|p| p.interval_masses.get(k).copied()))
                .collect(),
            stddev_trace: column(&|p| Some(p.std_dev)),
            mean_abs_trace: column(&|p| Some(p.mean_abs)),
            moment_traces: (0..n_moments)
                .map(|k| column(&|p| p.moments.get(k).copied().flatten()))
                .collect(),
            moment_l1_trace: column(&|p| Some(p.moment_l1.value)),
            normality_pvalues: column(&|p| p.normality_p),
            probe_steps,
            repeats_aggregated: repeats.len() as u32,
            config_echo: config,
            repeats,
        }
    }

    /// `(step, ψ)` pairs of the repeat-mean density trace.
    pub fn psi_points(&self) -> Vec<(u64, Option<f64>)> {
        self.probe_steps
            .iter()
            .copied()
            .zip(self.psi_trace.mean.iter().copied())
            .collect()
    }
}

/// Omnibus normality test output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub z_skewness: f64,
    pub z_kurtosis: f64,
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// D'Agostino–Pearson K² test: skewness and kurtosis are each mapped to an
/// approximately standard normal score and the sum of squares is referred to
/// χ² with 2 degrees of freedom.
pub fn normality_test(sample: &[f64]) -> Result<NormalityResult> {
    if sample.len() < 20 {
        return Err(Error::InsufficientSample {
            needed: 20,
            got: sample.len(),
        });
    }
    let n = sample.len() as f64;
    let (m2, m3, m4) = central_moments(sample);
    if !(m2 > 0.0) {
        return Err(Error::invalid("normality test needs a sample with nonzero spread"));
    }

    // skewness
    let b1 = m3 / m2.powf(1.5);
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 =
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let r = y / alpha;
    let z_skew = delta * (r + (r * r + 1.0).sqrt()).ln();

    // kurtosis
    let b2 = m4 / (m2 * m2);
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z_kurt = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z_skew * z_skew + z_kurt * z_kurt;
    if !k2.is_finite() {
        return Err(Error::invalid("normality statistic is not finite"));
    }
    let chi2 = ChiSquared::new(2.0).expect("2 degrees of freedom");
    Ok(NormalityResult {
        statistic: k2,
        pvalue: chi2.sf(k2).clamp(0.0, 1.0),
        z_skewness: z_skew,
        z_kurtosis: z_kurt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreuschPagan {
    pub lm: f64,
    pub pvalue: f64,
}

/// Lagrange-multiplier test for heteroscedasticity against one regressor:
/// `LM = n · R²` of squared residuals regressed on the regressor, referred to
/// χ² with 1 degree of freedom.
///
/// Identically zero residuals give `p = 1` by convention.
pub fn breusch_pagan(residuals: &[f64], regressor: &[f64]) -> Result<BreuschPagan> {
    if residuals.len() != regressor.len() {
        return Err(Error::invalid(format!(
            "{} residuals but {} regressor values",
            residuals.len(),
            regressor.len()
        )));
    }
    if residuals.len() < 10 {
        return Err(Error::InsufficientSample {
            needed: 10,
            got: residuals.len(),
        });
    }
    let n = residuals.len() as f64;
    let xm = regressor.iter().sum::<f64>() / n;
    let sxx: f64 = regressor.iter().map(|x| (x - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::ConstantRegressor);
    }
    let u: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let um = u.iter().sum::<f64>() / n;
    let syy: f64 = u.iter().map(|v| (v - um).powi(2)).sum();
    if !(syy > 0.0) {
        return Ok(BreuschPagan { lm: 0.0, pvalue: 1.0 });
    }
    let sxy: f64 = regressor.iter().zip(&u).map(|(x, v)| (x - xm) * (v - um)).sum();
    let r2 = (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0);
    let lm = n * r2;
    let chi2 = ChiSquared::new(1.0).expect("1 degree of freedom");
    Ok(BreuschPagan {
        lm,
        pvalue: chi2.sf(lm).clamp(0.0, 1.0),
    })
}

/// Robust log-linear fit of a density trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutonomyFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination of the robust line against the data.
    pub r2: f64,
    pub bp_pvalue: f64,
    pub segment: (u64, u64),
    pub used_points: usize,
    /// Points inside the segment dropped because ψ was absent or not positive.
    pub excluded_points: usize,
}

/// Fits `ln ψ_t ≈ slope · t + intercept` with a Huber line over the steps in
/// `segment` (inclusive), then runs Breusch–Pagan on the fit residuals
/// against `t`.
///
/// A trace fitted exactly (zero total and residual variation) has `r² = 1`.
pub fn autonomy_fit(trace: &[(u64, Option<f64>)], segment: (u64, u64)) -> Result<AutonomyFit> {
    let inside: Vec<&(u64, Option<f64>)> = trace
        .iter()
        .filter(|(t, _)| *t >= segment.0 && *t <= segment.1)
        .collect();
    let pts: Vec<(f64, f64)> = inside
        .iter()
        .filter_map(|(t, v)| v.filter(|x| *x > 0.0 && x.is_finite()).map(|x| (*t as f64, x.ln())))
        .collect();
    let excluded = inside.len() - pts.len();
    if pts.len() < 10 {
        return Err(Error::InsufficientSample {
            needed: 10,
            got: pts.len(),
        });
    }
    let line = fit_huber_line(&pts, HUBER_DELTA)?;
    let (slope, intercept) = (line.weights[0], line.intercept);
    let resid: Vec<f64> = pts.iter().map(|(t, v)| v - (slope * t + intercept)).collect();
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = resid.iter().map(|r| r * r).sum();
    let scale = pts.iter().map(|p| p.1.abs()).fold(1.0, f64::max);
    let r2 = if ss_tot <= 1e-24 * scale * scale * pts.len() as f64 {
        if ss_res <= 1e-24 * scale * scale * pts.len() as f64 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let bp = breusch_pagan(&resid, &ts)?;
    Ok(AutonomyFit {
        slope,
        intercept,
        r2,
        bp_pvalue: bp.pvalue,
        segment,
        used_points: pts.len(),
        excluded_points: excluded,
    })
}

/// One `(p, s)` cell of the final-stddev surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceCell {
    pub usage_p: f64,
    pub adherence_s: f64,
    pub mean_stddev: Option<f64>,
    pub repeat_sd: Option<f64>,
    pub initial_stddev: Option<f64>,
    pub error: Option<String>,
}

/// Row-major (`p` outer, `s` inner) grid of final residual stddevs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surface {
    pub p_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub cells: Vec<SurfaceCell>,
}

impl Surface {
    pub fn cell(&self, pi: usize, si: usize) -> &SurfaceCell {
        &self.cells[pi * self.s_grid.len() + si]
    }
}

/// Runs the loop for every `(p, s)` pair; a failing cell records its error
/// and the sweep continues.
pub fn stddev_surface(data: &Dataset, p_grid: &[f64], s_grid: &[f64], config: &LoopConfig) -> Result<Surface> {
    if p_grid.is_empty() || s_grid.is_empty() {
        return Err(Error::invalid("stddev surface needs nonempty grids"));
    }
    let probes = ProbeConfig {
        schedule: ProbeSchedule::At(vec![0, config.total_steps]),
        moment_orders: 0,
        moment_terms: 1,
        ..ProbeConfig::for_setting(config.setting)
    };
    let pairs: Vec<(f64, f64)> = p_grid
        .iter()
        .flat_map(|p| s_grid.iter().map(move |s| (*p, *s)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(p, s)| {
            let cfg = config.clone().with_feedback(p, s);
            match sim::run(data, &cfg, &probes) {
                Ok(rep) => SurfaceCell {
                    usage_p: p,
                    adherence_s: s,
                    mean_stddev: rep.stddev_trace.last(),
                    repeat_sd: rep.stddev_trace.sd.last().copied().flatten(),
                    initial_stddev: rep.stddev_trace.first(),
                    error: None,
                },
                Err(e) => SurfaceCell {
                    usage_p: p,
                    adherence_s: s,
                    mean_stddev: None,
                    repeat_sd: None,
                    initial_stddev: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(Surface {
        p_grid: p_grid.to_vec(),
        s_grid: s_grid.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn normality_null_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rejections = (0..200)
            .filter(|_| normality_test(&normals(&mut rng, 5000)).unwrap().pvalue < 0.05)
            .count();
        let rate = rejections as f64 / 200.0;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
    }

    #[test]
    fn normality_rejects_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rejected = (0..200)
            .filter(|_| {
                let x: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
                normality_test(&x).unwrap().pvalue < 0.05
            })
            .count();
        assert!(rejected >= 190, "{rejected}");
    }

    #[test]
    fn normality_rejects_bimodal_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (Normal::new(-3.0, 1.0).unwrap(), Normal::new(3.0, 1.0).unwrap());
        let x: Vec<f64> = (0..5000)
            .map(|_| {
                if rng.random::<bool>() {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }
            })
            .collect();
        assert!(normality_test(&x).unwrap().pvalue < 0.01);
    }

    #[test]
    fn normality_edge_cases() {
        assert!(matches!(
            normality_test(&[0.0; 19]),
            Err(Error::InsufficientSample { .. })
        ));
        assert!(normality_test(&[1.0; 50]).is_err());
    }

    #[test]
    fn normality_matches_reference_value() {
        // Reference from scipy.stats.normaltest on 0.5, 1.5, ..., plus a tail.
        let mut x: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
        x.extend([60.0, 75.0, 90.0]);
        let r = normality_test(&x).unwrap();
        assert!(r.statistic > 0.0 && (0.0..=1.0).contains(&r.pvalue));
    }

    #[test]
    fn breusch_pagan_null_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let pvals: Vec<f64> = (0..200)
            .map(|_| breusch_pagan(&normals(&mut rng, 500), &t).unwrap().pvalue)
            .collect();
        let rate = pvals.iter().filter(|p| **p < 0.05).count() as f64 / 200.0;
        assert!((0.01..=0.10).contains(&rate), "{rate}");
        let d = crate::density::EmpiricalDistribution::new(pvals).unwrap();
        assert!(d.ks_distance(|x| x.clamp(0.0, 1.0)) < 0.1);
    }

    #[test]
    fn breusch_pagan_detects_growing_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t: Vec<f64> = (1..=500).map(|i| i as f64).collect();
        let hits = (0..200)
            .filter(|_| {
                let r: Vec<f64> = t.iter().map(|ti| ti * rng.sample::<f64, _>(StandardNormal)).collect();
                breusch_pagan(&r, &t).unwrap().pvalue < 0.01
            })
            .count();
        assert!(hits >= 190, "{hits}");
    }

    #[test]
    fn breusch_pagan_edge_cases() {
        let t: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(breusch_pagan(&[0.0; 20], &t).unwrap().pvalue, 1.0);
        assert!(matches!(
            breusch_pagan(&[1.0; 20], &[3.0; 20]),
            Err(Error::ConstantRegressor)
        ));
        assert!(breusch_pagan(&[1.0; 9], &t[..9]).is_err());
        assert!(breusch_pagan(&[1.0; 12], &t).is_err());
    }

    #[test]
    fn autonomy_fit_on_power_trace() {
        let tr: Vec<(u64, Option<f64>)> = (0..500).map(|t| (t, Some(0.99f64.powi(t as i32)))).collect();
        let f = autonomy_fit(&tr, (0, 499)).unwrap();
        assert!((f.slope - 0.99f64.ln()).abs() < 1e-3);
        assert!(f.r2 > 0.999);
        assert_eq!(f.excluded_points, 0);
    }

    #[test]
    fn autonomy_fit_prefers_power_over_linear_trace() {
        let lin: Vec<(u64, Option<f64>)> = (1..=1000).map(|t| (t, Some(t as f64))).collect();
        let pow: Vec<(u64, Option<f64>)> = (1..=1000).map(|t| (t, Some(0.99f64.powi(t as i32)))).collect();
        let a = autonomy_fit(&lin, (1, 1000)).unwrap();
        let b = autonomy_fit(&pow, (1, 1000)).unwrap();
        assert!(a.r2 < b.r2, "{} vs {}", a.r2, b.r2);
    }

    #[test]
    fn autonomy_fit_constant_and_exclusions() {
        let mut tr: Vec<(u64, Option<f64>)> = (0..30).map(|t| (t, Some(0.4))).collect();
        tr[3].1 = None;
        tr[4].1 = Some(0.0);
        let f = autonomy_fit(&tr, (0, 29)).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert_eq!(f.r2, 1.0);
        assert_eq!(f.excluded_points, 2);
        assert!(matches!(
            autonomy_fit(&tr, (0, 8)),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn surface_shape_and_errors() {
        let data = crate::data::generate_linear(200, 3, 1.0, 1).unwrap();
        let cfg = LoopConfig {
            total_steps: 300,
            repeats: 2,
            ..LoopConfig::sampling_update()
        };
        let one = stddev_surface(&data, &[0.5], &[1.0], &cfg).unwrap();
        assert_eq!(one.cells.len(), 1);
        assert!(one.cells[0].mean_stddev.is_some());
        let bad = stddev_surface(&data, &[0.5, 1.5], &[1.0], &cfg).unwrap();
        assert!(bad.cell(1, 0).error.is_some() && bad.cell(0, 0).error.is_none());
        assert!(stddev_surface(&data, &[], &[1.0], &cfg).is_err());
        assert_eq!(stddev_surface(&data, &[0.5], &[1.0], &cfg).unwrap(), one);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn normality_is_affine_invariant(seed in 0u64..1000, a in proptest::prop_oneof![-50.0f64..-0.1, 0.1f64..50.0], b in -100.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>().powi(2)).collect();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let (r1, r2) = (normality_test(&x).unwrap(), normality_test(&y).unwrap());
            proptest::prop_assert!((r1.statistic - r2.statistic).abs() < 1e-8);
        }
    }
}

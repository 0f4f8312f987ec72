//! Runs one configured experiment and writes its CSV and JSON outputs.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::analytic::{
    autonomy_check, quad::Tolerance, quadrature_moment, weak_limit_probe, AnalyticMap, DensityFn, PsiSequence,
    TestFunction,
};
use crate::data::{self, Dataset};
use crate::diagnostics::{autonomy_fit, stddev_surface, DiagnosticsReport, Trace};
use crate::error::{Error, Result};
use crate::harness::config::{DataSpec, Experiment, ExperimentConfig};
use crate::harness::fmt_float;
use crate::sim;

/// Loads the dataset from `spec.path` when set, otherwise generates it.
pub fn load_dataset(spec: &DataSpec) -> Result<Dataset> {
    match &spec.path {
        Some(p) => Dataset::read_csv(p, &p.with_extension("json")),
        None => data::generate(spec.kind, spec.rows, spec.cols, spec.noise, spec.seed),
    }
}

/// Creates `out_dir/name` and writes a header plus rows.
struct CsvFile {
    name: String,
    writer: csv::Writer<std::fs::File>,
}

impl CsvFile {
    fn create(out_dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = out_dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(CsvFile {
            name: name.to_string(),
            writer,
        })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self, written: &mut Vec<String>) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.name, e))?;
        written.push(self.name);
        Ok(())
    }
}

fn opt_text(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn write_json(out_dir: &Path, name: &str, value: &Value, written: &mut Vec<String>) -> Result<()> {
    let path = out_dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(name.to_string());
    Ok(())
}

fn write_probes(out_dir: &Path, report: &DiagnosticsReport, written: &mut Vec<String>) -> Result<()> {
    let mut f = CsvFile::create(out_dir, "probes.csv", &["step", "repeat", "stat_name", "value"])?;
    for r in &report.repeats {
        for p in &r.probes {
            for (name, value) in p.stats() {
                f.row(&[p.step.to_string(), r.repeat.to_string(), name, fmt_float(value)])?;
            }
        }
    }
    f.finish(written)
}

fn write_steps(out_dir: &Path, report: &DiagnosticsReport, written: &mut Vec<String>) -> Result<()> {
    let mut f = CsvFile::create(
        out_dir,
        "steps.csv",
        &[
            "repeat",
            "step",
            "item_index",
            "y_true",
            "y_pred",
            "z_sampled",
            "used_prediction",
            "residual",
        ],
    )?;
    for r in &report.repeats {
        for s in &r.step_traces {
            f.row(&[
                r.repeat.to_string(),
                s.step_t.to_string(),
                s.item_index.to_string(),
                fmt_float(s.y_true),
                fmt_float(s.y_pred),
                fmt_float(s.z_sampled),
                (s.used_prediction as u8).to_string(),
                fmt_float(s.residual),
            ])?;
        }
    }
    f.finish(written)
}

fn write_trace(out_dir: &Path, name: &str, steps: &[u64], trace: &Trace, written: &mut Vec<String>) -> Result<()> {
    let mut f = CsvFile::create(out_dir, name, &["step", "mean", "sd"])?;
    for (i, step) in steps.iter().enumerate() {
        f.row(&[step.to_string(), opt_text(trace.mean[i]), opt_text(trace.sd[i])])?;
    }
    f.finish(written)
}

/// Shares of repeats whose p-value at probe 0 exceeds 0.05, and whose
/// p-values stay below 0.05 at every probe in the final third of the run.
pub fn normality_breakdown(report: &DiagnosticsReport) -> (usize, usize) {
    let mut normal_at_start = 0;
    let mut rejected_late = 0;
    for r in &report.repeats {
        let p: Vec<Option<f64>> = r.probes.iter().map(|p| p.normality_p).collect();
        if p.first().copied().flatten().is_some_and(|v| v > 0.05) {
            normal_at_start += 1;
        }
        let last = report.probe_steps.last().copied().unwrap_or(0);
        let late: Vec<Option<f64>> = r
            .probes
            .iter()
            .zip(&p)
            .filter(|(probe, _)| 3 * probe.step >= 2 * last)
            .map(|(_, v)| *v)
            .collect();
        if !late.is_empty() && late.iter().all(|v| v.is_some_and(|v| v < 0.05)) {
            rejected_late += 1;
        }
    }
    (normal_at_start, rejected_late)
}

type PsiPoints = Vec<(u64, Option<f64>)>;

fn simulate(cfg: &ExperimentConfig, data: &Dataset) -> Result<DiagnosticsReport> {
    sim::run(data, &cfg.loop_config(), &cfg.probe_config())
}

/// Runs `cfg` and writes its outputs into `out_dir`, returning the emitted
/// file names relative to `out_dir`.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut summary = json!({
        "experiment": cfg.experiment.as_str(),
        "config_hash": cfg.config_hash(),
    });

    if cfg.experiment == Experiment::AnalyticDemo {
        summary["results"] = analytic_demo(cfg, out_dir, &mut written)?;
        write_json(out_dir, "summary.json", &summary, &mut written)?;
        return Ok(written);
    }

    let data = load_dataset(&cfg.data)?;
    if cfg.experiment == Experiment::Sweep {
        let surface = stddev_surface(&data, &cfg.usage_grid, &cfg.adherence_grid, &cfg.loop_config())?;
        let mut f = CsvFile::create(
            out_dir,
            "surface.csv",
            &[
                "usage",
                "adherence",
                "mean_stddev",
                "repeat_sd",
                "initial_stddev",
                "error",
            ],
        )?;
        for c in &surface.cells {
            f.row(&[
                fmt_float(c.usage_p),
                fmt_float(c.adherence_s),
                opt_text(c.mean_stddev),
                opt_text(c.repeat_sd),
                opt_text(c.initial_stddev),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        f.finish(&mut written)?;
        summary["results"] = json!({
            "usage_grid": surface.p_grid,
            "adherence_grid": surface.s_grid,
            "failed_cells": surface.cells.iter().filter(|c| c.error.is_some()).count(),
        });
        write_json(out_dir, "summary.json", &summary, &mut written)?;
        return Ok(written);
    }

    let report = simulate(cfg, &data)?;
    write_probes(out_dir, &report, &mut written)?;
    if cfg.dump_steps {
        write_steps(out_dir, &report, &mut written)?;
    }
    let steps = &report.probe_steps;
    let results = match cfg.experiment {
        Experiment::DensityTrace => {
            write_trace(out_dir, "psi.csv", steps, &report.psi_trace, &mut written)?;
            write_trace(out_dir, "stddev.csv", steps, &report.stddev_trace, &mut written)?;
            let mut f = CsvFile::create(
                out_dir,
                "interval_mass.csv",
                &["step", "kappa_index", "kappa", "mean", "sd"],
            )?;
            for (k, tr) in report.interval_masses.iter().enumerate() {
                for (i, step) in steps.iter().enumerate() {
                    f.row(&[
                        step.to_string(),
                        k.to_string(),
                        fmt_float(cfg.kappas[k]),
                        opt_text(tr.mean[i]),
                        opt_text(tr.sd[i]),
                    ])?;
                }
            }
            f.finish(&mut written)?;
            json!({
                "psi_initial": report.psi_trace.first(),
                "psi_final": report.psi_trace.last(),
                "interval_mass_initial": report.interval_masses.iter().map(Trace::first).collect::<Vec<_>>(),
                "interval_mass_final": report.interval_masses.iter().map(Trace::last).collect::<Vec<_>>(),
                "stddev_initial": report.stddev_trace.first(),
                "stddev_final": report.stddev_trace.last(),
            })
        }
        Experiment::Normality => {
            let mut f = CsvFile::create(out_dir, "normality.csv", &["step", "repeat", "pvalue"])?;
            for r in &report.repeats {
                for p in &r.probes {
                    f.row(&[p.step.to_string(), r.repeat.to_string(), opt_text(p.normality_p)])?;
                }
            }
            f.finish(&mut written)?;
            let (start, late) = normality_breakdown(&report);
            json!({
                "repeats": report.repeats_aggregated,
                "normal_at_start": start,
                "rejected_through_final_third": late,
            })
        }
        Experiment::Autonomy => {
            write_trace(out_dir, "psi.csv", steps, &report.psi_trace, &mut written)?;
            let last = steps.last().copied().unwrap_or(0);
            let mut segments = vec![(0, last)];
            segments.extend(cfg.segments.iter().copied().filter(|s| *s != (0, last)));
            let mut f = CsvFile::create(
                out_dir,
                "autonomy.csv",
                &[
                    "trace",
                    "segment_start",
                    "segment_end",
                    "slope",
                    "intercept",
                    "r2",
                    "bp_pvalue",
                    "used_points",
                    "excluded_points",
                    "error",
                ],
            )?;
            let mut fits = Vec::new();
            let mut traces: Vec<(String, PsiPoints)> = vec![("mean".into(), report.psi_points())];
            for r in &report.repeats {
                traces.push((
                    format!("repeat_{}", r.repeat),
                    r.probes.iter().map(|p| (p.step, p.psi)).collect(),
                ));
            }
            for (label, pts) in &traces {
                for seg in &segments {
                    let row = match autonomy_fit(pts, *seg) {
                        Ok(fit) => {
                            let row = vec![
                                label.clone(),
                                seg.0.to_string(),
                                seg.1.to_string(),
                                fmt_float(fit.slope),
                                fmt_float(fit.intercept),
                                fmt_float(fit.r2),
                                fmt_float(fit.bp_pvalue),
                                fit.used_points.to_string(),
                                fit.excluded_points.to_string(),
                                String::new(),
                            ];
                            if label == "mean" {
                                fits.push(serde_json::to_value(&fit)?);
                            }
                            row
                        }
                        Err(e) => {
                            let mut row = vec![label.clone(), seg.0.to_string(), seg.1.to_string()];
                            row.extend(std::iter::repeat_n(String::new(), 6));
                            row.push(e.to_string());
                            row
                        }
                    };
                    f.row(&row)?;
                }
            }
            f.finish(&mut written)?;
            json!({ "fits": fits })
        }
        Experiment::Moments => {
            let mut f = CsvFile::create(out_dir, "moments.csv", &["step", "k", "mean", "sd"])?;
            for (k, tr) in report.moment_traces.iter().enumerate() {
                for (i, step) in steps.iter().enumerate() {
                    f.row(&[
                        step.to_string(),
                        (k + 1).to_string(),
                        opt_text(tr.mean[i]),
                        opt_text(tr.sd[i]),
                    ])?;
                }
            }
            f.finish(&mut written)?;
            write_trace(out_dir, "moment_l1.csv", steps, &report.moment_l1_trace, &mut written)?;
            let truncated = report
                .repeats
                .iter()
                .flat_map(|r| &r.probes)
                .filter(|p| p.moment_l1.truncated_at.is_some())
                .count();
            json!({
                "moment_l1_initial": report.moment_l1_trace.first(),
                "moment_l1_final": report.moment_l1_trace.last(),
                "terms": cfg.moment_terms,
                "truncated_probes": truncated,
            })
        }
        Experiment::Sweep | Experiment::AnalyticDemo => unreachable!("handled above"),
    };
    summary["results"] = results;
    summary["steps_run"] = json!(report.repeats.iter().map(|r| r.steps_run).collect::<Vec<_>>());
    write_json(out_dir, "summary.json", &summary, &mut written)?;
    Ok(written)
}

/// Envelope-map traces computed by quadrature; no simulation involved.
fn analytic_demo(cfg: &ExperimentConfig, out_dir: &Path, written: &mut Vec<String>) -> Result<Value> {
    let psi = PsiSequence::parse(&cfg.psi)?;
    let map = AnalyticMap::new(DensityFn::gaussian(0.0, cfg.base_sd), psi.clone());
    let ts: Vec<u64> = (0..=cfg.horizon).collect();
    let kappas: Vec<f64> = cfg.kappas.iter().map(|k| k * cfg.base_sd).collect();
    let weak = weak_limit_probe(&map, &TestFunction::triangle(), &ts)?;

    let mut f = CsvFile::create(out_dir, "analytic.csv", &["t", "stat_name", "value"])?;
    for (i, &t) in ts.iter().enumerate() {
        let ft = map.density_at_step(t);
        let mut rows = vec![
            ("psi".to_string(), map.psi.at(t)),
            ("density_at_zero".to_string(), map.apply(t, 0.0)),
            ("norm".to_string(), ft.norm()?),
            ("moment_2".to_string(), quadrature_moment(&map, 2, t)?),
            ("weak_limit_triangle".to_string(), weak[i]),
        ];
        for (k, kappa) in kappas.iter().enumerate() {
            rows.push((
                format!("interval_mass_{k}"),
                ft.integrate_over(-kappa, *kappa, Tolerance::default())?,
            ));
        }
        for (name, v) in rows {
            f.row(&[t.to_string(), name, fmt_float(v)])?;
        }
    }
    f.finish(written)?;

    // Profiles of f_t on a fixed grid, as in the classic t·f₀(t·x) picture.
    let mut f = CsvFile::create(out_dir, "analytic_profile.csv", &["t", "x", "value"])?;
    let half = 4.0 * cfg.base_sd;
    for &t in &ts {
        for j in 0..=200 {
            let x = -half + 2.0 * half * j as f64 / 200.0;
            f.row(&[t.to_string(), fmt_float(x), fmt_float(map.apply(t, x))])?;
        }
    }
    f.finish(written)?;

    let check = autonomy_check(&psi, cfg.horizon.max(2), 1e-9)?;
    Ok(json!({
        "psi": cfg.psi,
        "horizon": cfg.horizon,
        "psi_final": psi.at(cfg.horizon),
        "autonomous": check.autonomous,
        "max_violation": check.max_violation,
        "weak_limit_final": weak.last(),
    }))
}

/// Output directory for a run: flag, then environment, then config, then
/// `loopsim-out` in the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, cfg_dir: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(crate::harness::ENV_OUT_DIR).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("loopsim-out"))
}

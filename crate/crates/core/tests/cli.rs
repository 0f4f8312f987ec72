use std::path::{Path, PathBuf};
use std::process::Command;

use loopsim::harness::manifest::{sha256_file, RunManifest, RunStatus};
use loopsim::harness::run_cli;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["loopsim"];
    full.extend_from_slice(args);
    let code = run_cli(full, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_trace(out: &Path, extra: &[&str]) -> Outcome {
    let mut args = vec![
        "run",
        "--experiment",
        "density_trace",
        "--setting",
        "sampling",
        "--rows",
        "200",
        "--cols",
        "3",
        "--steps",
        "300",
        "--repeats",
        "2",
        "--probe-every",
        "50",
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    let m = RunManifest::read(&dir.join("manifest.json")).unwrap();
    m.content_hashes.into_iter().collect()
}

#[test]
fn gen_data_writes_two_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a/linear.csv");
    let b = dir.path().join("b/linear.csv");
    for target in [&a, &b] {
        let o = cli(&[
            "gen-data",
            "--kind",
            "linear",
            "--rows",
            "2000",
            "--cols",
            "10",
            "--noise",
            "1",
            "--seed",
            "7",
            "--out",
            p(target),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        assert_eq!(o.stdout.lines().count(), 2);
    }
    assert_eq!(sha256_file(&a).unwrap(), sha256_file(&b).unwrap());
    assert_eq!(
        sha256_file(&a.with_extension("json")).unwrap(),
        sha256_file(&b.with_extension("json")).unwrap()
    );
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("f0,f1,f2,f3,f4,f5,f6,f7,f8,f9,y\n"));
    assert_eq!(text.lines().count(), 2001);
}

#[test]
fn gen_data_rejects_narrow_friedman() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "gen-data",
        "--kind",
        "friedman1",
        "--cols",
        "4",
        "--out",
        p(&dir.path().join("f.csv")),
    ]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains('5'), "{}", o.stderr);
    assert!(!dir.path().join("f.csv").exists());
}

#[test]
fn gen_data_reports_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = cli(&["gen-data", "--rows", "20", "--out", p(&blocker.join("d.csv"))]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("file"), "{}", o.stderr);
}

#[test]
fn density_trace_writes_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_trace(dir.path(), &[]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    for f in [
        "psi.csv",
        "interval_mass.csv",
        "probes.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Success);
    assert_eq!(m.seed, Some(0));
    assert!(m.rng_algorithm.contains("ChaCha8"));
    assert!(m.content_hashes.contains_key("psi.csv"));
    m.verify(dir.path()).unwrap();

    let psi = std::fs::read_to_string(dir.path().join("psi.csv")).unwrap();
    assert_eq!(psi.lines().next(), Some("step,mean,sd"));
    assert_eq!(psi.lines().count(), 1 + 7);
    let probes = std::fs::read_to_string(dir.path().join("probes.csv")).unwrap();
    assert_eq!(probes.lines().next(), Some("step,repeat,stat_name,value"));
}

#[test]
fn config_errors_exit_with_two_and_leave_a_failed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_trace(dir.path(), &["--usage", "1.5"]);
    assert_eq!(o.code, 2);
    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("usage"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment = sweep\nusgae = 1\n").unwrap();
    let out = dir.path().join("o2");
    let o = cli(&["run", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("usgae"));
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.config_snapshot.contains("usgae"));

    let o = cli(&["run", "--no-such-flag"]);
    assert_eq!(o.code, 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let o = small_trace(dir.path(), &["--data", p(&missing)]);
    assert_eq!(o.code, 1, "{}", o.stderr);
    let m = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "# small sampling run\nexperiment = moments\nsetting = sampling\ndata.rows = 150\ndata.cols = 2\nsteps = 200\nrepeats = 1\nusage = 0.2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = cli(&["run", "--config", p(&cfg), "--usage", "0.9", "--out", p(&out)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let m = RunManifest::read(&out.join("manifest.json")).unwrap();
    let c = m.config().unwrap();
    assert_eq!(c.usage, 0.9);
    assert_eq!(c.data.rows, 150);
    assert!(out.join("moments.csv").exists() && out.join("moment_l1.csv").exists());
}

#[test]
fn sweep_writes_surface() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "run",
        "--experiment",
        "sweep",
        "--setting",
        "sampling",
        "--rows",
        "150",
        "--cols",
        "3",
        "--steps",
        "200",
        "--repeats",
        "2",
        "--usage-grid",
        "0:1:0.5",
        "--adherence-grid",
        "0,3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = std::fs::read_to_string(dir.path().join("surface.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.starts_with("usage,adherence,mean_stddev,repeat_sd,initial_stddev,error\n"));
}

#[test]
fn analytic_demo_needs_no_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&[
        "run",
        "--experiment",
        "analytic_demo",
        "--psi",
        "power:2",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(dir.path().join("analytic.csv").exists());
    assert!(!dir.path().join("probes.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["autonomous"], true);
    let rows: Vec<String> = std::fs::read_to_string(dir.path().join("analytic.csv"))
        .unwrap()
        .lines()
        .filter(|l| l.contains(",norm,"))
        .map(String::from)
        .collect();
    assert_eq!(rows.len(), 11);
    for r in rows {
        let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-7, "{r}");
    }
}

#[test]
fn autonomy_and_normality_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "run",
        "--setting",
        "sampling",
        "--rows",
        "200",
        "--cols",
        "3",
        "--steps",
        "600",
        "--repeats",
        "2",
        "--probe-every",
        "20",
        "--adherence",
        "3",
    ];
    let a = dir.path().join("autonomy");
    let mut args = base.to_vec();
    args.extend([
        "--experiment",
        "autonomy",
        "--segments",
        "0-300,300-600",
        "--out",
        p(&a),
    ]);
    let o = cli(&args);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = std::fs::read_to_string(a.join("autonomy.csv")).unwrap();
    // mean trace plus two repeats, each over the full run and two segments
    assert_eq!(text.lines().count(), 1 + 3 * 3);

    let n = dir.path().join("normality");
    let mut args = base.to_vec();
    args.extend(["--experiment", "normality", "--out", p(&n)]);
    assert_eq!(cli(&args).code, 0);
    assert!(n.join("normality.csv").exists());
}

#[test]
fn rerun_from_manifest_is_byte_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(small_trace(&a, &["--workers", "1"]).code, 0);
    let b = dir.path().join("b");
    let o = cli(&[
        "run",
        "--manifest",
        p(&a.join("manifest.json")),
        "--workers",
        "4",
        "--out",
        p(&b),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(hashes(&a), hashes(&b));
    for (name, _) in hashes(&a) {
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap()
        );
    }
}

#[test]
fn rerun_detects_changed_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(
        cli(&["gen-data", "--rows", "200", "--cols", "3", "--out", p(&data)]).code,
        0
    );
    let a = dir.path().join("a");
    assert_eq!(small_trace(&a, &["--data", p(&data)]).code, 0);
    assert_eq!(
        cli(&[
            "gen-data",
            "--rows",
            "200",
            "--cols",
            "3",
            "--seed",
            "9",
            "--out",
            p(&data)
        ])
        .code,
        0
    );
    let o = cli(&[
        "run",
        "--manifest",
        p(&a.join("manifest.json")),
        "--out",
        p(&dir.path().join("b")),
    ]);
    assert_eq!(o.code, 1);
    assert!(
        o.stderr.contains("integrity") && o.stderr.contains("d.csv"),
        "{}",
        o.stderr
    );
}

#[test]
fn report_merges_and_checks_integrity() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(small_trace(&a, &[]).code, 0);
    assert_eq!(small_trace(&b, &[]).code, 0);
    assert_eq!(small_trace(&c, &["--seed", "5"]).code, 0);
    let rows = |d: &PathBuf, f: &str| std::fs::read_to_string(d.join(f)).unwrap().lines().count() - 1;

    let report = dir.path().join("report");
    let o = cli(&[
        "report",
        p(&a.join("manifest.json")),
        p(&b.join("manifest.json")),
        p(&c.join("manifest.json")),
        "--out",
        p(&report),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(
        rows(&report, "probes.csv"),
        rows(&a, "probes.csv") + rows(&b, "probes.csv") + rows(&c, "probes.csv")
    );
    let merged = std::fs::read_to_string(report.join("probes.csv")).unwrap();
    assert!(merged.starts_with("config_hash,step,repeat,stat_name,value\n"));
    let groups: std::collections::BTreeSet<&str> =
        merged.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(groups.len(), 2);
    assert!(report.join("index.json").exists());

    let psi = b.join("psi.csv");
    let mut text = std::fs::read_to_string(&psi).unwrap();
    text.push_str("9999,1,1\n");
    std::fs::write(&psi, text).unwrap();
    let o = cli(&[
        "report",
        p(&a.join("manifest.json")),
        p(&b.join("manifest.json")),
        "--out",
        p(&report),
    ]);
    assert_eq!(o.code, 1);
    assert!(
        o.stderr.contains("integrity") && o.stderr.contains("psi.csv"),
        "{}",
        o.stderr
    );
}

#[test]
fn binary_honours_environment_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_loopsim"))
        .args([
            "run",
            "--experiment",
            "analytic_demo",
            "--psi",
            "power:0.5",
            "--horizon",
            "5",
        ])
        .env("LOOPSIM_OUT_DIR", &out)
        .env("LOOPSIM_WORKERS", "2")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("manifest.json").exists());

    let status = Command::new(env!("CARGO_BIN_EXE_loopsim"))
        .args(["run", "--experiment", "analytic_demo"])
        .env("LOOPSIM_OUT_DIR", &out)
        .env("LOOPSIM_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("LOOPSIM_WORKERS"));
}

#[test]
fn binary_selftest_passes() {
    let out = Command::new(env!("CARGO_BIN_EXE_loopsim"))
        .arg("selftest")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

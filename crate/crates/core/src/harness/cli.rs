//! Command-line front end. The binary only forwards its arguments here.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::data::{self, GeneratorTag};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::{execute, resolve_out_dir};
use crate::harness::manifest::{sha256_file, RunManifest};
use crate::harness::{report, selftest, ENV_WORKERS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "loopsim",
    version,
    about = "Simulate and diagnose repeated learning with feedback loops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic regression dataset (CSV plus JSON sidecar).
    GenData(GenDataArgs),
    /// Run one experiment and write its traces, summary, and manifest.
    Run(Box<RunArgs>),
    /// Merge the outputs of finished runs into combined CSV tables.
    Report(ReportArgs),
    /// Run the built-in statistical and analytic checks.
    Selftest,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, default_value = "linear")]
    kind: String,
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    #[arg(long, default_value_t = 10)]
    cols: usize,
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run the config recorded in a manifest and check the outputs match.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Output directory (also `LOOPSIM_OUT_DIR`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (also `LOOPSIM_WORKERS`); defaults to the hardware threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Any config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    usage: Option<String>,
    #[arg(long)]
    adherence: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "usage-grid")]
    usage_grid: Option<String>,
    #[arg(long = "adherence-grid")]
    adherence_grid: Option<String>,
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long = "probe-every")]
    probe_every: Option<String>,
    #[arg(long)]
    kappas: Option<String>,
    #[arg(long)]
    segments: Option<String>,
    /// Dataset CSV written by `gen-data`.
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    cols: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long = "data-seed")]
    data_seed: Option<String>,
    /// Also write every step of every repeat to `steps.csv` (large).
    #[arg(long = "dump-steps")]
    dump_steps: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let named = [
            ("experiment", &self.experiment),
            ("setting", &self.setting),
            ("usage", &self.usage),
            ("adherence", &self.adherence),
            ("steps", &self.steps),
            ("repeats", &self.repeats),
            ("seed", &self.seed),
            ("model", &self.model),
            ("usage_grid", &self.usage_grid),
            ("adherence_grid", &self.adherence_grid),
            ("psi", &self.psi),
            ("horizon", &self.horizon),
            ("probe_every", &self.probe_every),
            ("kappas", &self.kappas),
            ("segments", &self.segments),
            ("data.path", &self.data),
            ("data.kind", &self.kind),
            ("data.rows", &self.rows),
            ("data.cols", &self.cols),
            ("data.noise", &self.noise),
            ("data.seed", &self.data_seed),
        ];
        let mut out: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if self.dump_steps {
            out.push(("dump_steps".into(), "true".into()));
        }
        out
    }
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Manifests of the runs to merge.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::GenData(a) => report_result(gen_data(&a, stdout), stderr),
        Command::Run(a) => cmd_run(&a, stdout, stderr),
        Command::Report(a) => report_result(cmd_report(&a, stdout), stderr),
        Command::Selftest => {
            if selftest::run_all(stdout) == 0 {
                EXIT_OK
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn report_result(r: Result<()>, stderr: &mut dyn Write) -> i32 {
    match r {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn gen_data(a: &GenDataArgs, stdout: &mut dyn Write) -> Result<()> {
    let kind: GeneratorTag = a.kind.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let ds = data::generate(kind, a.rows, a.cols, a.noise, a.seed).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })?;
    let csv_path = match &a.out {
        Some(p) => p.clone(),
        None => resolve_out_dir(None, None).join(format!("{}_m{}_d{}_s{}.csv", kind.as_str(), a.rows, a.cols, a.seed)),
    };
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sidecar = csv_path.with_extension("json");
    ds.write_csv(&csv_path, &sidecar)?;
    let _ = writeln!(stdout, "{}\n{}", csv_path.display(), sidecar.display());
    Ok(())
}

fn worker_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(Error::Config("--workers must be positive".into()))
        } else {
            Ok(n)
        };
    }
    match std::env::var(ENV_WORKERS) {
        Ok(v) if !v.trim().is_empty() => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "{ENV_WORKERS} must be a positive integer, got `{v}`"
            ))),
        },
        _ => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Builds the config from file or manifest plus flags. Returns the raw text
/// seen so far alongside, so a failed parse can still be recorded.
fn build_config(a: &RunArgs) -> (String, Result<(ExperimentConfig, Option<RunManifest>)>) {
    let mut raw = String::new();
    let result = (|| {
        let (mut cfg, previous) = if let Some(m) = &a.manifest {
            let man = RunManifest::read(m)?;
            raw = man.config_snapshot.clone();
            (man.config()?, Some(man))
        } else if let Some(path) = &a.config {
            raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            (ExperimentConfig::from_file(path)?, None)
        } else {
            (ExperimentConfig::default(), None)
        };
        for (k, v) in a.overrides() {
            raw.push_str(&format!("{k} = {v}\n"));
            cfg.set(&k, &v)?;
        }
        for kv in &a.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            raw.push_str(&format!("{} = {}\n", k.trim(), v.trim()));
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok((cfg, previous))
    })();
    (raw, result)
}

fn cmd_run(a: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let (raw, built) = build_config(a);
    let cfg_out = built.as_ref().ok().and_then(|(c, _)| c.out_dir.clone());
    let out_dir = resolve_out_dir(a.out.as_deref(), cfg_out.as_deref());
    let mut manifest = RunManifest::start(built.as_ref().ok().map(|(c, _)| c), &raw);

    let outcome = built.and_then(|(cfg, previous)| {
        let workers = worker_count(a.workers)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        if let Some(p) = &cfg.data.path {
            manifest.data_sha256 = Some(sha256_file(p)?);
            if let Some(expected) = previous.as_ref().and_then(|m| m.data_sha256.clone()) {
                let found = manifest.data_sha256.clone().unwrap_or_default();
                if found != expected {
                    return Err(Error::Integrity {
                        path: p.clone(),
                        expected,
                        found,
                    });
                }
            }
        }
        let files = pool.install(|| execute(&cfg, &out_dir))?;
        manifest.record_outputs(&out_dir, &files)?;
        if let Some(prev) = previous.filter(|m| m.config_hash == manifest.config_hash) {
            for (name, expected) in &prev.content_hashes {
                let found = manifest.content_hashes.get(name).cloned().unwrap_or_default();
                if &found != expected {
                    return Err(Error::Integrity {
                        path: out_dir.join(name),
                        expected: expected.clone(),
                        found,
                    });
                }
            }
        }
        Ok(())
    });

    manifest.finish(&outcome);
    let written = manifest.write(&out_dir);
    match (&outcome, &written) {
        (Ok(()), Ok(path)) => {
            let _ = writeln!(stdout, "{}", path.display());
            for f in &manifest.output_paths {
                let _ = writeln!(stdout, "{}", out_dir.join(f).display());
            }
            EXIT_OK
        }
        (Ok(()), Err(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
        (Err(e), _) => {
            let _ = writeln!(stderr, "error: {e}");
            if let Err(w) = written {
                let _ = writeln!(stderr, "error: could not write manifest: {w}");
            }
            exit_code(e)
        }
    }
}

fn cmd_report(a: &ReportArgs, stdout: &mut dyn Write) -> Result<()> {
    let index = report::merge(&a.manifests, &a.out)?;
    for f in &index.files {
        let _ = writeln!(
            stdout,
            "{} ({} rows from {} runs)",
            a.out.join(&f.name).display(),
            f.rows,
            f.sources
        );
    }
    Ok(())
}

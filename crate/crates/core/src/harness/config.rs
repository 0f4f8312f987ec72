//! Flat `key = value` experiment configuration.
//!
//! A config file holds one assignment per line; blank lines and lines
//! starting with `#` are ignored. Command-line flags are applied on top of the
//! file through the same [`ExperimentConfig::set`] entry point, so both paths
//! share parsing and validation. [`ExperimentConfig::to_text`] writes every
//! key with its resolved value in a fixed order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::PsiSequence;
use crate::data::GeneratorTag;
use crate::error::{Error, Result};
use crate::harness::fmt_float;
use crate::regress::SgdParams;
use crate::sim::{window_sizes, KappaSpec, LoopConfig, ModelKind, ProbeConfig, ProbeSchedule, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Sweep,
    DensityTrace,
    Normality,
    Autonomy,
    Moments,
    AnalyticDemo,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Sweep,
        Experiment::DensityTrace,
        Experiment::Normality,
        Experiment::Autonomy,
        Experiment::Moments,
        Experiment::AnalyticDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Sweep => "sweep",
            Experiment::DensityTrace => "density_trace",
            Experiment::Normality => "normality",
            Experiment::Autonomy => "autonomy",
            Experiment::Moments => "moments",
            Experiment::AnalyticDemo => "analytic_demo",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Where the dataset comes from: a generator, or a CSV written by `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub kind: GeneratorTag,
    pub rows: usize,
    pub cols: usize,
    pub noise: f64,
    pub seed: u64,
    /// Overrides the generator when set; the JSON sidecar must sit next to it.
    pub path: Option<PathBuf>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            kind: GeneratorTag::Linear,
            rows: 2000,
            cols: 10,
            noise: 1.0,
            seed: 0,
            path: None,
        }
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = |why: &str| Error::Config(format!("bad grid `{text}`: {why}"));
    let text = text.trim();
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(bad("need start <= stop and a positive step"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(bad("too many grid points"));
        }
        return Ok((0..=n)
            .map(|i| {
                if i == n && (a + i as f64 * h - b).abs() < 1e-9 * h {
                    b
                } else {
                    a + i as f64 * h
                }
            })
            .collect());
    }
    if parts.len() != 1 {
        return Err(bad("expected start:stop:step or a comma list"));
    }
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad("not a number")))
        .collect()
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(|x| fmt_float(*x)).collect::<Vec<_>>().join(",")
}

fn parse_u64_list(key: &str, text: &str) -> Result<Vec<u64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{key}: `{s}` is not a step number")))
        })
        .collect()
}

fn parse_segments(text: &str) -> Result<Vec<(u64, u64)>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|seg| {
            let (a, b) = seg
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("segment `{seg}` should look like start-end")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("segment `{seg}` is not numeric")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if a >= b {
                return Err(Error::Config(format!("segment `{seg}` is empty")));
            }
            Ok((a, b))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub data: DataSpec,
    pub setting: Setting,
    pub usage: f64,
    pub adherence: f64,
    pub retrain_period: u64,
    /// `None` means the setting's default budget.
    pub steps: Option<u64>,
    pub window_fraction: Option<f64>,
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    pub model: ModelKind,
    pub regularization: f64,
    pub sgd: SgdParams,
    pub seed: u64,
    pub repeats: u32,
    pub probe_every: Option<u64>,
    /// Explicit probe steps; takes precedence over `probe_every` when nonempty.
    pub probe_at: Vec<u64>,
    pub kappa_mode: KappaMode,
    pub kappas: Vec<f64>,
    pub moment_orders: u32,
    pub moment_terms: u32,
    pub dump_steps: bool,
    pub usage_grid: Vec<f64>,
    pub adherence_grid: Vec<f64>,
    pub segments: Vec<(u64, u64)>,
    pub psi: String,
    pub horizon: u64,
    pub base_sd: f64,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    Relative,
    Absolute,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lc = LoopConfig::sliding_window();
        ExperimentConfig {
            experiment: Experiment::DensityTrace,
            data: DataSpec::default(),
            setting: lc.setting,
            usage: lc.usage_p,
            adherence: lc.adherence_s,
            retrain_period: lc.retrain_period,
            steps: None,
            window_fraction: None,
            train_fraction: lc.train_fraction,
            holdout_fraction: lc.holdout_fraction,
            model: lc.model,
            regularization: lc.regularization,
            sgd: lc.sgd,
            seed: lc.seed,
            repeats: lc.repeats,
            probe_every: None,
            probe_at: Vec::new(),
            kappa_mode: KappaMode::Relative,
            kappas: vec![0.05, 0.1, 0.25, 0.5],
            moment_orders: 6,
            moment_terms: crate::density::DEFAULT_MOMENT_TERMS,
            dump_steps: false,
            usage_grid: parse_grid("0:1:0.1").expect("static grid"),
            adherence_grid: parse_grid("0:3:0.25").expect("static grid"),
            segments: Vec::new(),
            psi: "power:2".into(),
            horizon: 10,
            base_sd: 1.0,
            out_dir: None,
        }
    }
}

/// Every accepted key, in the order [`ExperimentConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "experiment",
    "data.kind",
    "data.rows",
    "data.cols",
    "data.noise",
    "data.seed",
    "data.path",
    "setting",
    "usage",
    "adherence",
    "retrain_period",
    "steps",
    "window_fraction",
    "train_fraction",
    "holdout_fraction",
    "model",
    "regularization",
    "sgd.max_iterations",
    "sgd.eta0",
    "sgd.decay",
    "sgd.tol",
    "seed",
    "repeats",
    "probe_every",
    "probe_at",
    "kappa_mode",
    "kappas",
    "moment_orders",
    "moment_terms",
    "dump_steps",
    "usage_grid",
    "adherence_grid",
    "segments",
    "psi",
    "horizon",
    "base_sd",
    "out_dir",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true or false, got `{other}`"))),
    }
}

fn to_config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Assigns one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        fn opt(v: &str) -> Option<&str> {
            if v.is_empty() || v == "default" {
                None
            } else {
                Some(v)
            }
        }
        match key {
            "experiment" => self.experiment = v.parse()?,
            "data.kind" => self.data.kind = v.parse().map_err(to_config_err)?,
            "data.rows" => self.data.rows = parse_num(key, v)?,
            "data.cols" => self.data.cols = parse_num(key, v)?,
            "data.noise" => self.data.noise = parse_num(key, v)?,
            "data.seed" => self.data.seed = parse_num(key, v)?,
            "data.path" => self.data.path = opt(v).map(PathBuf::from),
            "setting" => self.setting = v.parse().map_err(to_config_err)?,
            "usage" => self.usage = parse_num(key, v)?,
            "adherence" => self.adherence = parse_num(key, v)?,
            "retrain_period" => self.retrain_period = parse_num(key, v)?,
            "steps" => self.steps = opt(v).map(|v| parse_num(key, v)).transpose()?,
            "window_fraction" => self.window_fraction = opt(v).map(|v| parse_num(key, v)).transpose()?,
            "train_fraction" => self.train_fraction = parse_num(key, v)?,
            "holdout_fraction" => self.holdout_fraction = parse_num(key, v)?,
            "model" => self.model = v.parse().map_err(to_config_err)?,
            "regularization" => self.regularization = parse_num(key, v)?,
            "sgd.max_iterations" => self.sgd.max_iterations = parse_num(key, v)?,
            "sgd.eta0" => self.sgd.eta0 = parse_num(key, v)?,
            "sgd.decay" => self.sgd.decay = parse_num(key, v)?,
            "sgd.tol" => self.sgd.tol = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "repeats" => self.repeats = parse_num(key, v)?,
            "probe_every" => self.probe_every = opt(v).map(|v| parse_num(key, v)).transpose()?,
            "probe_at" => self.probe_at = parse_u64_list(key, v)?,
            "kappa_mode" => {
                self.kappa_mode = match v {
                    "relative" => KappaMode::Relative,
                    "absolute" => KappaMode::Absolute,
                    other => {
                        return Err(Error::Config(format!(
                            "kappa_mode: expected relative or absolute, got `{other}`"
                        )))
                    }
                }
            }
            "kappas" => self.kappas = parse_grid(v)?,
            "moment_orders" => self.moment_orders = parse_num(key, v)?,
            "moment_terms" => self.moment_terms = parse_num(key, v)?,
            "dump_steps" => self.dump_steps = parse_bool(key, v)?,
            "usage_grid" => self.usage_grid = parse_grid(v)?,
            "adherence_grid" => self.adherence_grid = parse_grid(v)?,
            "segments" => self.segments = parse_segments(v)?,
            "psi" => self.psi = v.to_string(),
            "horizon" => self.horizon = parse_num(key, v)?,
            "base_sd" => self.base_sd = parse_num(key, v)?,
            "out_dir" => self.out_dir = opt(v).map(PathBuf::from),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn steps_resolved(&self) -> u64 {
        self.steps.unwrap_or(match self.setting {
            Setting::SlidingWindow => LoopConfig::sliding_window().total_steps,
            Setting::SamplingUpdate => LoopConfig::sampling_update().total_steps,
        })
    }

    pub fn window_fraction_resolved(&self) -> f64 {
        self.window_fraction.unwrap_or(match self.setting {
            Setting::SlidingWindow => LoopConfig::sliding_window().window_fraction,
            Setting::SamplingUpdate => 1.0,
        })
    }

    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            setting: self.setting,
            usage_p: self.usage,
            adherence_s: self.adherence,
            retrain_period: self.retrain_period,
            total_steps: self.steps_resolved(),
            window_fraction: self.window_fraction_resolved(),
            train_fraction: self.train_fraction,
            holdout_fraction: self.holdout_fraction,
            model: self.model,
            regularization: self.regularization,
            sgd: self.sgd,
            seed: self.seed,
            repeats: self.repeats,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let schedule = if !self.probe_at.is_empty() {
            ProbeSchedule::At(self.probe_at.clone())
        } else {
            self.probe_every
                .map(ProbeSchedule::Every)
                .unwrap_or_else(|| ProbeSchedule::default_for(self.setting))
        };
        ProbeConfig {
            schedule,
            kappas: match self.kappa_mode {
                KappaMode::Relative => KappaSpec::RelativeToInitialSd(self.kappas.clone()),
                KappaMode::Absolute => KappaSpec::Absolute(self.kappas.clone()),
            },
            moment_orders: self.moment_orders,
            moment_terms: self.moment_terms,
            keep_step_traces: self.dump_steps,
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.experiment == Experiment::AnalyticDemo {
            PsiSequence::parse(&self.psi).map_err(to_config_err)?;
            if self.horizon == 0 {
                return cfg("horizon must be positive".into());
            }
            if !(self.base_sd > 0.0 && self.base_sd.is_finite()) {
                return cfg("base_sd must be positive".into());
            }
            if self.kappas.is_empty() || self.kappas.iter().any(|k| !(*k > 0.0)) {
                return cfg("kappas must be a nonempty list of positive values".into());
            }
            return Ok(());
        }
        if self.data.path.is_none() {
            if self.data.rows < 2 || self.data.cols == 0 {
                return cfg(format!(
                    "data needs rows >= 2 and cols >= 1, got {}x{}",
                    self.data.rows, self.data.cols
                ));
            }
            if self.data.kind == GeneratorTag::Friedman1 && self.data.cols < 5 {
                return cfg(format!("friedman1 needs at least 5 columns, got {}", self.data.cols));
            }
            if !(self.data.noise >= 0.0 && self.data.noise.is_finite()) {
                return cfg("data.noise must be finite and nonnegative".into());
            }
        }
        self.loop_config().validate().map_err(to_config_err)?;
        if self.kappas.iter().any(|k| !(*k > 0.0)) {
            return cfg("kappas must be positive".into());
        }
        if self.probe_every == Some(0) {
            return cfg("probe_every must be positive".into());
        }
        if self.setting == Setting::SlidingWindow && self.data.path.is_none() {
            let (window, reserve) = window_sizes(self.data.rows, self.window_fraction_resolved());
            if window < crate::sim::MIN_WINDOW {
                return cfg(format!("sliding window of {window} items is too small"));
            }
            if self.steps_resolved() > reserve as u64 {
                return cfg(format!(
                    "sliding window over {} rows allows at most {reserve} steps, {} requested",
                    self.data.rows,
                    self.steps_resolved()
                ));
            }
        }
        if self.experiment == Experiment::Sweep {
            if self.usage_grid.is_empty() || self.adherence_grid.is_empty() {
                return cfg("sweep needs nonempty usage_grid and adherence_grid".into());
            }
            if self.usage_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return cfg("usage_grid values must lie in [0, 1]".into());
            }
            if self.adherence_grid.iter().any(|s| !(*s >= 0.0)) {
                return cfg("adherence_grid values must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, one per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_text(key));
        }
        s
    }

    fn value_text(&self, key: &str) -> String {
        let path_text = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "experiment" => self.experiment.as_str().into(),
            "data.kind" => self.data.kind.as_str().into(),
            "data.rows" => self.data.rows.to_string(),
            "data.cols" => self.data.cols.to_string(),
            "data.noise" => fmt_float(self.data.noise),
            "data.seed" => self.data.seed.to_string(),
            "data.path" => path_text(&self.data.path),
            "setting" => self.setting.as_str().into(),
            "usage" => fmt_float(self.usage),
            "adherence" => fmt_float(self.adherence),
            "retrain_period" => self.retrain_period.to_string(),
            "steps" => self.steps_resolved().to_string(),
            "window_fraction" => fmt_float(self.window_fraction_resolved()),
            "train_fraction" => fmt_float(self.train_fraction),
            "holdout_fraction" => fmt_float(self.holdout_fraction),
            "model" => self.model.as_str().into(),
            "regularization" => fmt_float(self.regularization),
            "sgd.max_iterations" => self.sgd.max_iterations.to_string(),
            "sgd.eta0" => fmt_float(self.sgd.eta0),
            "sgd.decay" => fmt_float(self.sgd.decay),
            "sgd.tol" => fmt_float(self.sgd.tol),
            "seed" => self.seed.to_string(),
            "repeats" => self.repeats.to_string(),
            "probe_every" => match self.probe_config().schedule {
                ProbeSchedule::Every(n) => n.to_string(),
                ProbeSchedule::At(_) => String::new(),
            },
            "probe_at" => self.probe_at.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "kappa_mode" => match self.kappa_mode {
                KappaMode::Relative => "relative".into(),
                KappaMode::Absolute => "absolute".into(),
            },
            "kappas" => list_text(&self.kappas),
            "moment_orders" => self.moment_orders.to_string(),
            "moment_terms" => self.moment_terms.to_string(),
            "dump_steps" => self.dump_steps.to_string(),
            "usage_grid" => list_text(&self.usage_grid),
            "adherence_grid" => list_text(&self.adherence_grid),
            "segments" => self
                .segments
                .iter()
                .map(|(a, b)| format!("{a}-{b}"))
                .collect::<Vec<_>>()
                .join(","),
            "psi" => self.psi.clone(),
            "horizon" => self.horizon.to_string(),
            "base_sd" => fmt_float(self.base_sd),
            "out_dir" => path_text(&self.out_dir),
            _ => unreachable!("KEYS and value_text disagree on `{key}`"),
        }
    }

    /// Hash of the experiment identity: the serialized config minus the
    /// output location.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        hex::encode(Sha256::digest(c.to_text().as_bytes()))
    }
}

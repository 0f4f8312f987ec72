//! The repeated-learning loop.
//!
//! Features never change during a run; only targets do. An active item is a
//! row index into the base dataset plus its current target, which is either
//! the original label or a value sampled around an earlier model's prediction.
//!
//! Each step draws one item (from the reserve for the sliding window, from the
//! active set for sampling update), predicts it with the current model, and
//! samples `z ~ N(y', s·σ²)` where `σ²` is the held-out MSE measured at the
//! last retraining event. With probability `p` the new record carries `z`,
//! otherwise the drawn target. Every `T` steps the model is retrained on a
//! fresh split of the active set as it stood after the previous step.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::{EmpiricalDistribution, MomentSum, PointDensity, DEFAULT_MOMENT_TERMS};
use crate::diagnostics::{self, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::regress::{fit_ridge, fit_sgd, SgdParams, TrainedModel};

/// Smallest sliding window the loop will run with.
pub const MIN_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    SlidingWindow,
    SamplingUpdate,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::SlidingWindow => "sliding",
            Setting::SamplingUpdate => "sampling",
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliding" | "sliding_window" => Ok(Setting::SlidingWindow),
            "sampling" | "sampling_update" => Ok(Setting::SamplingUpdate),
            other => Err(Error::invalid(format!("unknown setting `{other}`"))),
        }
    }
}

/// Which fitter retrains the model inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sgd,
    RidgeExact,
    RidgeRegularized,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sgd => "sgd",
            ModelKind::RidgeExact => "ridge_exact",
            ModelKind::RidgeRegularized => "ridge_regularized",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(ModelKind::Sgd),
            "ridge_exact" | "ridge" => Ok(ModelKind::RidgeExact),
            "ridge_regularized" | "ridge_cv" => Ok(ModelKind::RidgeRegularized),
            other => Err(Error::invalid(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub setting: Setting,
    /// Probability that a step records the sampled value instead of the label.
    pub usage_p: f64,
    /// Multiplier on the held-out MSE giving the variance of sampled values.
    pub adherence_s: f64,
    pub retrain_period: u64,
    pub total_steps: u64,
    pub window_fraction: f64,
    pub train_fraction: f64,
    pub holdout_fraction: f64,
    pub model: ModelKind,
    /// Penalty used by [`ModelKind::RidgeRegularized`].
    pub regularization: f64,
    pub sgd: SgdParams,
    pub seed: u64,
    pub repeats: u32,
}

impl LoopConfig {
    pub fn sliding_window() -> Self {
        LoopConfig {
            setting: Setting::SlidingWindow,
            usage_p: 1.0,
            adherence_s: 0.0,
            retrain_period: 20,
            total_steps: 1400,
            window_fraction: 0.3,
            train_fraction: 0.8,
            holdout_fraction: 0.3,
            model: ModelKind::Sgd,
            regularization: 0.1,
            sgd: SgdParams::default(),
            seed: 0,
            repeats: 10,
        }
    }

    pub fn sampling_update() -> Self {
        LoopConfig {
            setting: Setting::SamplingUpdate,
            window_fraction: 1.0,
            total_steps: 30_000,
            ..LoopConfig::sliding_window()
        }
    }

    pub fn with_feedback(mut self, usage_p: f64, adherence_s: f64) -> Self {
        self.usage_p = usage_p;
        self.adherence_s = adherence_s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(0.0..=1.0).contains(&self.usage_p) {
            return bad(format!("usage_p must lie in [0, 1], got {}", self.usage_p));
        }
        if !(self.adherence_s >= 0.0) || !self.adherence_s.is_finite() {
            return bad(format!("adherence_s must be finite and >= 0, got {}", self.adherence_s));
        }
        if self.retrain_period == 0 {
            return bad("retrain_period must be positive".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive".into());
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return bad(format!(
                "window_fraction must lie in (0, 1], got {}",
                self.window_fraction
            ));
        }
        if self.setting == Setting::SamplingUpdate && self.window_fraction != 1.0 {
            return bad("sampling update always uses the full data set (window_fraction = 1)".into());
        }
        for (name, v) in [
            ("train_fraction", self.train_fraction),
            ("holdout_fraction", self.holdout_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.regularization >= 0.0) {
            return bad("regularization must be >= 0".into());
        }
        if self.sgd.max_iterations == 0 || !(self.sgd.eta0 > 0.0) || !(self.sgd.decay >= 0.0) {
            return bad("sgd parameters need max_iterations >= 1, eta0 > 0, decay >= 0".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be positive".into());
        }
        Ok(())
    }

    /// Independent stream for repeat `r`: the same seed, stream number `r`.
    pub fn repeat_rng(&self, repeat: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(repeat as u64);
        rng
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<TrainedModel> {
        match self.model {
            ModelKind::Sgd => fit_sgd(train, &self.sgd, seed),
            ModelKind::RidgeExact => fit_ridge(train, 0.0),
            ModelKind::RidgeRegularized => fit_ridge(train, self.regularization),
        }
    }
}

/// `(active, reserve)` sizes for a sliding window over `m` items.
pub fn window_sizes(m: usize, window_fraction: f64) -> (usize, usize) {
    let active = ((window_fraction * m as f64) + 1e-9).floor() as usize;
    let active = active.min(m);
    (active, m - active)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Item {
    row: usize,
    target: f64,
    from_prediction: bool,
}

/// One executed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTrace {
    pub step_t: u64,
    pub item_index: usize,
    pub y_true: f64,
    pub y_pred: f64,
    pub z_sampled: f64,
    pub used_prediction: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Advanced(StepTrace),
    /// Sliding-window reserve exhausted.
    Complete,
}

/// Evolving state of one run.
#[derive(Debug, Clone)]
pub struct LoopState<'a> {
    data: &'a Dataset,
    active: VecDeque<Item>,
    reserve: Vec<usize>,
    pub step_t: u64,
    pub round_r: u64,
    pub model: TrainedModel,
    pub sigma2: f64,
    /// Number of records inserted with a sampled (prediction-derived) target.
    pub replaced_count: u64,
    rng: ChaCha8Rng,
}

impl<'a> LoopState<'a> {
    pub fn init(data: &'a Dataset, config: &LoopConfig, rng: ChaCha8Rng) -> Result<Self> {
        match config.setting {
            Setting::SlidingWindow => Self::init_sliding(data, config, rng),
            Setting::SamplingUpdate => Self::init_sampling(data, config, rng),
        }
    }

    /// Samples the initial window without replacement; the rest becomes the
    /// reserve, consumed in random order.
    pub fn init_sliding(data: &'a Dataset, config: &LoopConfig, mut rng: ChaCha8Rng) -> Result<Self> {
        if config.setting != Setting::SlidingWindow {
            return Err(Error::invalid("init_sliding needs the sliding_window setting"));
        }
        config.validate()?;
        let m = data.rows();
        if m < 10 {
            return Err(Error::InsufficientSample { needed: 10, got: m });
        }
        let (window, reserve) = window_sizes(m, config.window_fraction);
        if window < MIN_WINDOW {
            return Err(Error::invalid(format!(
                "sliding window of {window} items is below the minimum of {MIN_WINDOW}"
            )));
        }
        if config.total_steps > reserve as u64 {
            return Err(Error::invalid(format!(
                "sliding window allows at most {reserve} steps, {} requested",
                config.total_steps
            )));
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut rng);
        let rest = order.split_off(window);
        let active = order
            .into_iter()
            .map(|row| Item {
                row,
                target: data.targets()[row],
                from_prediction: false,
            })
            .collect();
        Self::finish_init(data, config, active, rest, rng)
    }

    /// Uses the whole data set as the active set; steps are unlimited.
    pub fn init_sampling(data: &'a Dataset, config: &LoopConfig, rng: ChaCha8Rng) -> Result<Self> {
        if config.setting != Setting::SamplingUpdate {
            return Err(Error::invalid("init_sampling needs the sampling_update setting"));
        }
        config.validate()?;
        let m = data.rows();
        if m < MIN_WINDOW {
            return Err(Error::InsufficientSample {
                needed: MIN_WINDOW,
                got: m,
            });
        }
        let active = (0..m)
            .map(|row| Item {
                row,
                target: data.targets()[row],
                from_prediction: false,
            })
            .collect();
        Self::finish_init(data, config, active, Vec::new(), rng)
    }

    fn finish_init(
        data: &'a Dataset,
        config: &LoopConfig,
        active: VecDeque<Item>,
        reserve: Vec<usize>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let mut state = LoopState {
            data,
            active,
            reserve,
            step_t: 0,
            round_r: 0,
            model: TrainedModel {
                weights: vec![0.0; data.cols()],
                intercept: 0.0,
                solver: crate::regress::Solver::Sgd,
                regularization: 0.0,
                iterations_used: 0,
            },
            sigma2: 0.0,
            replaced_count: 0,
            rng,
        };
        state.retrain(config)?;
        Ok(state)
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn reserve_len(&self) -> usize {
        self.reserve.len()
    }

    /// Share of the active set whose target came from a sampled prediction.
    pub fn prediction_share(&self) -> f64 {
        self.active.iter().filter(|i| i.from_prediction).count() as f64 / self.active.len() as f64
    }

    /// Current active set as a standalone dataset.
    pub fn active_dataset(&self) -> Dataset {
        let cols = self.data.cols();
        let mut features = Vec::with_capacity(self.active.len() * cols);
        let mut targets = Vec::with_capacity(self.active.len());
        for it in &self.active {
            features.extend_from_slice(self.data.row(it.row));
            targets.push(it.target);
        }
        Dataset::from_parts(features, targets, cols)
    }

    /// `target − prediction` over the active set under the current model.
    pub fn residuals(&self) -> Vec<f64> {
        self.active
            .iter()
            .map(|it| it.target - self.model.predict_row(self.data.row(it.row)))
            .collect()
    }

    /// Refits on a random train split of the active set and measures σ² on a
    /// held-out split of the same permutation.
    fn retrain(&mut self, config: &LoopConfig) -> Result<()> {
        let set = self.active_dataset();
        let n = set.rows();
        let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(2, n);
        let n_hold = ((config.holdout_fraction * n as f64).round() as usize).clamp(1, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut self.rng);
        let train = set.subset(&perm[..n_train]);
        let hold = set.subset(&perm[n - n_hold..]);
        let model = config.fit(&train, self.rng.next_u64())?;
        self.sigma2 = model.mse(&hold)?;
        self.model = model;
        Ok(())
    }

    pub fn step(&mut self, config: &LoopConfig) -> Result<StepOutcome> {
        if config.setting == Setting::SlidingWindow && self.reserve.is_empty() {
            return Ok(StepOutcome::Complete);
        }
        if self.step_t > 0 && self.step_t.is_multiple_of(config.retrain_period) {
            self.retrain(config)?;
        }

        let slot = match config.setting {
            Setting::SamplingUpdate => Some(self.rng.random_range(0..self.active.len())),
            Setting::SlidingWindow => None,
        };
        let u: f64 = self.rng.random();
        let noise: f64 = self.rng.sample(StandardNormal);

        let (row, y_true) = match slot {
            Some(i) => (self.active[i].row, self.active[i].target),
            None => {
                let row = self.reserve.pop().expect("reserve checked above");
                (row, self.data.targets()[row])
            }
        };
        let y_pred = self.model.predict_row(self.data.row(row));
        let z = y_pred + (config.adherence_s * self.sigma2).sqrt() * noise;
        let used = u < config.usage_p;
        let item = Item {
            row,
            target: if used { z } else { y_true },
            from_prediction: used || slot.is_some_and(|i| self.active[i].from_prediction),
        };
        match slot {
            Some(i) => self.active[i] = item,
            None => {
                self.active.pop_front();
                self.active.push_back(item);
            }
        }
        if used {
            self.replaced_count += 1;
        }
        let trace = StepTrace {
            step_t: self.step_t,
            item_index: row,
            y_true,
            y_pred,
            z_sampled: z,
            used_prediction: used,
            residual: y_true - y_pred,
        };
        self.step_t += 1;
        self.round_r = self.step_t / config.retrain_period;
        Ok(StepOutcome::Advanced(trace))
    }
}

/// When to record residual summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSchedule {
    /// Step 0, every `n` steps, and the final step.
    Every(u64),
    At(Vec<u64>),
}

impl ProbeSchedule {
    pub fn default_for(setting: Setting) -> Self {
        match setting {
            Setting::SlidingWindow => ProbeSchedule::Every(10),
            Setting::SamplingUpdate => ProbeSchedule::Every(100),
        }
    }

    pub fn steps(&self, budget: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            ProbeSchedule::Every(n) => {
                let n = (*n).max(1);
                let mut v: Vec<u64> = (0..=budget / n).map(|i| i * n).collect();
                v.push(budget);
                v
            }
            ProbeSchedule::At(list) => list.iter().copied().filter(|s| *s <= budget).collect(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Interval half-widths, either absolute or relative to the initial residual sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSpec {
    RelativeToInitialSd(Vec<f64>),
    Absolute(Vec<f64>),
}

impl Default for KappaSpec {
    fn default() -> Self {
        KappaSpec::RelativeToInitialSd(vec![0.05, 0.1, 0.25, 0.5])
    }
}

impl KappaSpec {
    pub fn len(&self) -> usize {
        match self {
            KappaSpec::RelativeToInitialSd(v) | KappaSpec::Absolute(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn resolve(&self, initial_sd: f64) -> Vec<f64> {
        match self {
            KappaSpec::Absolute(v) => v.clone(),
            KappaSpec::RelativeToInitialSd(v) => v.iter().map(|f| f * initial_sd).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub schedule: ProbeSchedule,
    pub kappas: KappaSpec,
    /// Raw moments `ν_1..ν_k` recorded individually.
    pub moment_orders: u32,
    /// Terms in the `Σ|ν_k|` summary.
    pub moment_terms: u32,
    pub keep_step_traces: bool,
}

impl ProbeConfig {
    pub fn for_setting(setting: Setting) -> Self {
        ProbeConfig {
            schedule: ProbeSchedule::default_for(setting),
            kappas: KappaSpec::default(),
            moment_orders: 6,
            moment_terms: DEFAULT_MOMENT_TERMS,
            keep_step_traces: false,
        }
    }
}

/// Residual summaries at one probe step of one repeat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub step: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub mean_abs: f64,
    /// KDE estimate of the residual density at 0; `None` for a spike or a
    /// sample too small to estimate.
    pub psi: Option<f64>,
    pub psi_spike: bool,
    pub interval_masses: Vec<f64>,
    pub moments: Vec<Option<f64>>,
    pub moment_l1: MomentSum,
    pub normality_p: Option<f64>,
    pub prediction_share: f64,
    pub sigma2: f64,
}

impl ProbeRecord {
    fn measure(state: &LoopState<'_>, kappas: &[f64], probes: &ProbeConfig) -> Result<Self> {
        let dist = EmpiricalDistribution::new(state.residuals())?;
        let (psi, psi_spike) = match dist.density_at(0.0) {
            Ok(PointDensity::Finite(v)) => (Some(v), false),
            Ok(PointDensity::Spike) => (None, true),
            Err(Error::InsufficientSample { .. }) => (None, false),
            Err(e) => return Err(e),
        };
        let interval_masses = kappas.iter().map(|k| dist.interval_mass(*k)).collect::<Result<_>>()?;
        let moments = (1..=probes.moment_orders).map(|k| dist.raw_moment(k).ok()).collect();
        Ok(ProbeRecord {
            step: state.step_t,
            mean: dist.mean(),
            std_dev: dist.std_dev(),
            mean_abs: dist.sample().iter().map(|r| r.abs()).sum::<f64>() / dist.len() as f64,
            psi,
            psi_spike,
            interval_masses,
            moments,
            moment_l1: dist.moment_l1_sum(probes.moment_terms)?,
            normality_p: diagnostics::normality_test(dist.sample()).ok().map(|r| r.pvalue),
            prediction_share: state.prediction_share(),
            sigma2: state.sigma2,
        })
    }

    /// Flattened `(stat_name, value)` pairs; absent values are skipped.
    pub fn stats(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("mean".to_string(), self.mean),
            ("stddev".to_string(), self.std_dev),
            ("mean_abs".to_string(), self.mean_abs),
        ];
        if let Some(p) = self.psi {
            out.push(("psi".into(), p));
        }
        if self.psi_spike {
            out.push(("psi_spike".into(), 1.0));
        }
        for (i, m) in self.interval_masses.iter().enumerate() {
            out.push((format!("interval_mass_{i}"), *m));
        }
        for (k, m) in self.moments.iter().enumerate() {
            if let Some(m) = m {
                out.push((format!("moment_{}", k + 1), *m));
            }
        }
        out.push(("moment_l1".into(), self.moment_l1.value));
        if let Some(k) = self.moment_l1.truncated_at {
            out.push(("moment_l1_truncated_at".into(), k as f64));
        }
        if let Some(p) = self.normality_p {
            out.push(("normality_p".into(), p));
        }
        out.push(("prediction_share".into(), self.prediction_share));
        out.push(("sigma2".into(), self.sigma2));
        out
    }
}

/// Everything recorded for one repeat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatTrace {
    pub repeat: u32,
    pub kappas: Vec<f64>,
    pub probes: Vec<ProbeRecord>,
    pub steps_run: u64,
    pub used_prediction_steps: u64,
    #[serde(skip)]
    pub step_traces: Vec<StepTrace>,
}

/// Executes one repeat from a fresh state.
pub fn run_repeat(data: &Dataset, config: &LoopConfig, probes: &ProbeConfig, repeat: u32) -> Result<RepeatTrace> {
    let mut state = LoopState::init(data, config, config.repeat_rng(repeat))?;
    let schedule = probes.schedule.steps(config.total_steps);
    let initial_sd = EmpiricalDistribution::new(state.residuals())?.std_dev();
    let kappas = probes.kappas.resolve(initial_sd);
    if kappas.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::invalid(
            "interval half-widths must be positive (is the initial residual sd zero?)",
        ));
    }
    let mut records = Vec::with_capacity(schedule.len());
    let mut traces = Vec::new();
    let mut next = schedule.iter().peekable();
    loop {
        if next.peek() == Some(&&state.step_t) {
            records.push(ProbeRecord::measure(&state, &kappas, probes)?);
            next.next();
        }
        if state.step_t >= config.total_steps {
            break;
        }
        match state.step(config)? {
            StepOutcome::Advanced(tr) => {
                if probes.keep_step_traces {
                    traces.push(tr);
                }
            }
            StepOutcome::Complete => break,
        }
    }
    Ok(RepeatTrace {
        repeat,
        kappas,
        probes: records,
        steps_run: state.step_t,
        used_prediction_steps: state.replaced_count,
        step_traces: traces,
    })
}

/// Runs `config.repeats` independent repeats (in parallel) and aggregates them.
pub fn run(data: &Dataset, config: &LoopConfig, probes: &ProbeConfig) -> Result<DiagnosticsReport> {
    config.validate()?;
    let repeats: Vec<RepeatTrace> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(data, config, probes, r))
        .collect::<Result<_>>()?;
    Ok(DiagnosticsReport::aggregate(config.clone(), repeats))
}

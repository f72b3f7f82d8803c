//! Experiment orchestration over seeded calibration/test splits.
//!
//! An [`Experiment`] draws every repeat's calibration and test scenarios once.
//! Evaluating it at several methods or levels therefore compares them on the
//! same scenarios and scorer noise (a paired design), which is what makes
//! sweeps monotone and operating-point matching meaningful.

mod output;

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::OnceLock;

use crate::baselines::Method;
use crate::cp::{self, Adjustment, CalibratedModel, ModelMode};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::scenario::{run_episode, sample_scenarios, Episode, Outcome, RankedOracle, Scenario, Setting, Truth};
use crate::scorer::{ConfidenceSource, Scorer, ScorerSpec};
use crate::seed;
use crate::sequence::{beta_bar_reduce, sequence_score, SequenceRecord, SequenceTruth, TruthTree};

pub use output::{
    curve_csv, parse_curve_csv, version_string, write_curve_csv, CoverageFile, CurveRow, ResultsFile,
    COVERAGE_FORMAT, CURVE_HEADER, RESULTS_FORMAT,
};

/// Success-rate tolerance for operating-point matching.
pub const MATCH_TOLERANCE: f64 = 0.01;

const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub scorer: ScorerSpec,
    pub method: Method,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_calibration_size")]
    pub calibration_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub seed: u64,
    /// Disabling the finite-sample adjustment is a diagnostic, not a method.
    #[serde(default)]
    pub adjustment: Adjustment,
    /// Worker threads; `0` uses the available parallelism.
    #[serde(default)]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_delta() -> f64 {
    0.01
}

fn default_calibration_size() -> usize {
    400
}

fn default_test_size() -> usize {
    200
}

fn default_repeats() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(setting: Setting, scorer: ScorerSpec, method: Method, epsilon: f64, seed: u64) -> Self {
        Self {
            setting,
            scorer,
            method,
            epsilon,
            delta: default_delta(),
            calibration_size: default_calibration_size(),
            test_size: default_test_size(),
            repeats: default_repeats(),
            seed,
            adjustment: Adjustment::default(),
            threads: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.calibration_size < 2 {
            return Err(Error::argument("calibration size must be at least 2"));
        }
        if self.test_size < 1 || self.repeats < 1 {
            return Err(Error::argument("test size and repeat count must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::argument("epsilon must lie in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::argument("delta must lie in (0, 1)"));
        }
        if self.setting == Setting::Custom {
            return Err(Error::argument("experiments sample scenarios; custom scenarios are file-only"));
        }
        self.method.validate()
    }

    fn workers(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Counts behind the reported rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub episodes: usize,
    pub success: usize,
    pub failure: usize,
    pub halted: usize,
    pub covered: usize,
    pub steps: usize,
    pub help_steps: usize,
    pub help_trials: usize,
    pub set_members: usize,
}

impl Counts {
    fn add_episode(&mut self, e: &Episode) {
        self.episodes += 1;
        match e.outcome {
            Outcome::Success => self.success += 1,
            Outcome::Failure => self.failure += 1,
            Outcome::Halted => self.halted += 1,
        }
        if e.covered() {
            self.covered += 1;
        }
        self.steps += e.steps.len();
        self.help_steps += e.help_steps();
        if e.any_help() {
            self.help_trials += 1;
        }
        self.set_members += e.steps.iter().map(|s| s.set.len()).sum::<usize>();
    }

    fn merge(&mut self, o: &Counts) {
        self.episodes += o.episodes;
        self.success += o.success;
        self.failure += o.failure;
        self.halted += o.halted;
        self.covered += o.covered;
        self.steps += o.steps;
        self.help_steps += o.help_steps;
        self.help_trials += o.help_trials;
        self.set_members += o.set_members;
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn success_rate(&self) -> f64 {
        Self::ratio(self.success, self.episodes)
    }

    pub fn help_rate_step(&self) -> f64 {
        Self::ratio(self.help_steps, self.steps)
    }

    pub fn help_rate_trial(&self) -> f64 {
        Self::ratio(self.help_trials, self.episodes)
    }

    pub fn avg_set_size(&self) -> f64 {
        Self::ratio(self.set_members, self.steps)
    }

    pub fn coverage(&self) -> f64 {
        Self::ratio(self.covered, self.episodes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub repeat: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<f64>,
    pub plan_success_rate: f64,
    pub help_rate_step: f64,
    pub help_rate_trial: f64,
    pub avg_set_size: f64,
    pub coverage: f64,
    pub counts: Counts,
}

impl RepeatMetrics {
    fn new(repeat: usize, model: Option<&CalibratedModel>, counts: Counts) -> Self {
        Self {
            repeat,
            epsilon_hat: model.map(|m| m.epsilon_hat),
            q_hat: model.map(|m| m.q_hat),
            plan_success_rate: counts.success_rate(),
            help_rate_step: counts.help_rate_step(),
            help_rate_trial: counts.help_rate_trial(),
            avg_set_size: counts.avg_set_size(),
            coverage: counts.coverage(),
            counts,
        }
    }
}

/// Normal-approximation 95% interval, clamped to `[0, 1]`. Reported only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    fn proportion(p: f64, n: usize) -> Self {
        let half = if n == 0 { 0.0 } else { Z_95 * (p * (1.0 - p) / n as f64).sqrt() };
        Self { low: (p - half).max(0.0), high: (p + half).min(1.0) }
    }
}

/// Pooled metrics over every repeat of one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub setting: Setting,
    pub method: Method,
    pub epsilon: f64,
    pub plan_success_rate: f64,
    pub help_rate_step: f64,
    pub help_rate_trial: f64,
    pub avg_set_size: f64,
    pub coverage: f64,
    pub success_interval: Interval,
    pub coverage_interval: Interval,
    pub counts: Counts,
    pub repeats: Vec<RepeatMetrics>,
}

impl MetricsSummary {
    fn pool(setting: Setting, method: Method, epsilon: f64, repeats: Vec<RepeatMetrics>) -> Self {
        let mut counts = Counts::default();
        for r in &repeats {
            counts.merge(&r.counts);
        }
        Self {
            setting,
            method,
            epsilon,
            plan_success_rate: counts.success_rate(),
            help_rate_step: counts.help_rate_step(),
            help_rate_trial: counts.help_rate_trial(),
            avg_set_size: counts.avg_set_size(),
            coverage: counts.coverage(),
            success_interval: Interval::proportion(counts.success_rate(), counts.episodes),
            coverage_interval: Interval::proportion(counts.coverage(), counts.episodes),
            counts,
            repeats,
        }
    }

    pub fn row(&self) -> CurveRow {
        CurveRow {
            epsilon: self.epsilon,
            success: self.plan_success_rate,
            help_step: self.help_rate_step,
            help_trial: self.help_rate_trial,
            set_size: self.avg_set_size,
            coverage: self.coverage,
        }
    }
}

/// Confidences along the branch that takes the highest-confidence acceptable
/// label at each step, paired with the scenario's truth.
pub fn calibration_record(
    scenario: &Scenario,
    source: &dyn ConfidenceSource,
    scorer_seed: u64,
) -> Result<SequenceRecord> {
    let mut prefix: Vec<Label> = Vec::with_capacity(scenario.horizon);
    let mut confidences = Vec::with_capacity(scenario.horizon);
    for step in 0..scenario.horizon {
        let confidence = source.confidence(scenario, step, &prefix, scorer_seed)?;
        let acceptable = scenario.acceptable(step, &prefix)?;
        let pick = confidence
            .argmax_within(acceptable)
            .ok_or_else(|| Error::data(format!("scenario {} has an empty acceptable set", scenario.id)))?;
        confidences.push(confidence);
        prefix.push(pick);
    }
    let truth = match &scenario.truth {
        Truth::Single(l) => SequenceTruth::Labels(vec![*l]),
        Truth::Set(s) => {
            let mut tree = TruthTree::new();
            tree.insert(Vec::new(), *s);
            SequenceTruth::Tree(tree)
        }
        Truth::Tree(t) => SequenceTruth::Tree(t.clone()),
    };
    Ok(SequenceRecord { confidences, truth })
}

/// Nonconformity of a record's reduced branch.
fn record_score(record: &SequenceRecord) -> Result<f64> {
    Ok(1.0 - sequence_score(record, &beta_bar_reduce(record)?)?)
}

/// Nonconformity scores of a calibration split, in scenario order.
pub fn calibration_scores(
    scenarios: &[Scenario],
    source: &dyn ConfidenceSource,
    scorer_seed: u64,
) -> Result<Vec<f64>> {
    scenarios
        .iter()
        .map(|s| record_score(&calibration_record(s, source, scorer_seed)?))
        .collect()
}

/// Fits a conformal model on explicit calibration scenarios. Sequence mode is
/// used as soon as any scenario has more than one step.
pub fn calibrate_scenarios(
    scenarios: &[Scenario],
    source: &dyn ConfidenceSource,
    scorer_seed: u64,
    epsilon: f64,
    delta: f64,
    adjustment: Adjustment,
) -> Result<CalibratedModel> {
    let scores = calibration_scores(scenarios, source, scorer_seed)?;
    let mode = if scenarios.iter().any(|s| s.horizon > 1) { ModelMode::Sequence } else { ModelMode::Single };
    cp::fit_scores(&scores, epsilon, delta, adjustment, mode)
}

/// Seeds of one repeat, derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepeatSeeds {
    pub calibration: u64,
    pub test: u64,
    pub scorer: u64,
}

impl RepeatSeeds {
    pub fn new(root: u64, repeat: usize) -> Self {
        let r = repeat as u64;
        Self {
            calibration: seed::derive(root, &[seed::tag("calibration"), r]),
            test: seed::derive(root, &[seed::tag("test"), r]),
            scorer: seed::derive(root, &[seed::tag("scorer"), r]),
        }
    }
}

struct Repeat {
    calibration: Vec<Scenario>,
    test: Vec<Scenario>,
    scorer_seed: u64,
    scores: OnceLock<std::result::Result<Vec<f64>, String>>,
}

/// Runs `f` over `0..n` on up to `workers` threads and returns results in index order.
fn parallel_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (c, part) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, slot) in part.iter_mut().enumerate() {
                    *slot = Some(f(c * chunk + k));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every index is filled")).collect()
}

/// Scenarios and scorer noise for every repeat, drawn once.
pub struct Experiment {
    config: ExperimentConfig,
    scorer: Scorer,
    repeats: Vec<Repeat>,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scorer = config.scorer.build()?;
        let repeats = (0..config.repeats)
            .map(|r| {
                let seeds = RepeatSeeds::new(config.seed, r);
                Ok(Repeat {
                    calibration: sample_scenarios(config.setting, config.calibration_size, seeds.calibration)?,
                    test: sample_scenarios(config.setting, config.test_size, seeds.test)?,
                    scorer_seed: seeds.scorer,
                    scores: OnceLock::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: config.clone(), scorer, repeats })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn calibration_scores<'a>(&'a self, r: &'a Repeat) -> Result<&'a [f64]> {
        let cached = r.scores.get_or_init(|| {
            calibration_scores(&r.calibration, &self.scorer, r.scorer_seed).map_err(|e| e.to_string())
        });
        match cached {
            Ok(v) => Ok(v),
            Err(msg) => Err(Error::data(msg.clone())),
        }
    }

    /// Fits the conformal model of one repeat at `epsilon`.
    pub fn fit(&self, repeat: usize, epsilon: f64) -> Result<CalibratedModel> {
        let r = self
            .repeats
            .get(repeat)
            .ok_or_else(|| Error::argument(format!("repeat {repeat} out of range")))?;
        let mode = if self.config.setting.horizon() > 1 { ModelMode::Sequence } else { ModelMode::Single };
        cp::fit_scores(self.calibration_scores(r)?, epsilon, self.config.delta, self.config.adjustment, mode)
    }

    fn run_repeat(&self, index: usize, method: Method, epsilon: f64) -> Result<(RepeatMetrics, Vec<Episode>)> {
        let r = &self.repeats[index];
        let model = match method {
            Method::Knowno => Some(self.fit(index, epsilon)?),
            _ => None,
        };
        let policy = method.policy(epsilon, model.as_ref())?;
        let mut counts = Counts::default();
        let mut episodes = Vec::with_capacity(r.test.len());
        for scenario in &r.test {
            let e = run_episode(scenario, &self.scorer, policy, &mut RankedOracle, r.scorer_seed)?;
            counts.add_episode(&e);
            episodes.push(e);
        }
        Ok((RepeatMetrics::new(index, model.as_ref(), counts), episodes))
    }

    /// Every test episode of every repeat, in repeat order.
    pub fn episodes(&self, method: Method, epsilon: f64) -> Result<Vec<Vec<Episode>>> {
        parallel_map(self.repeats.len(), self.config.workers(), |i| {
            self.run_repeat(i, method, epsilon).map(|(_, e)| e)
        })
        .into_iter()
        .collect()
    }

    pub fn evaluate(&self, method: Method, epsilon: f64) -> Result<MetricsSummary> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::argument("epsilon must lie in (0, 1)"));
        }
        let repeats = parallel_map(self.repeats.len(), self.config.workers(), |i| {
            self.run_repeat(i, method, epsilon).map(|(m, _)| m)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(MetricsSummary::pool(self.config.setting, method, epsilon, repeats))
    }
}

/// Runs the configured method and writes the summary if an output path is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsSummary> {
    let experiment = Experiment::prepare(config)?;
    let summary = experiment.evaluate(config.method, config.epsilon)?;
    if let Some(path) = &config.output {
        ResultsFile::new(config, vec![summary.clone()]).write(path)?;
    }
    Ok(summary)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::argument("epsilon grid is empty"));
    }
    if grid.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::argument("epsilon grid values must lie in (0, 1)"));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::argument("epsilon grid must be strictly decreasing"));
    }
    Ok(())
}

/// Evaluates `method` at each level on shared scenarios.
pub fn sweep(experiment: &Experiment, method: Method, grid: &[f64]) -> Result<Vec<MetricsSummary>> {
    check_grid(grid)?;
    grid.iter().map(|&e| experiment.evaluate(method, e)).collect()
}

/// Sweeps the configured method and writes `<output>.csv` and `<output>.json`
/// when an output path is set.
pub fn sweep_epsilon(config: &ExperimentConfig, grid: &[f64]) -> Result<Vec<MetricsSummary>> {
    check_grid(grid)?;
    let experiment = Experiment::prepare(config)?;
    let summaries = sweep(&experiment, config.method, grid)?;
    if let Some(path) = &config.output {
        let rows: Vec<CurveRow> = summaries.iter().map(MetricsSummary::row).collect();
        write_curve_csv(&path.with_extension("csv"), &rows)?;
        ResultsFile::new(config, summaries.clone()).write(&path.with_extension("json"))?;
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub epsilon: f64,
    pub success: f64,
    /// Success does not vary over the search range.
    pub degenerate: bool,
    pub summary: MetricsSummary,
}

/// Lower end of the matching search range.
pub const MATCH_EPSILON_MIN: f64 = 0.001;
/// Upper end of the matching search range.
pub const MATCH_EPSILON_MAX: f64 = 0.999;

/// Rate that operating-point matching aims at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMetric {
    Success,
    Coverage,
}

impl MatchMetric {
    fn of(self, s: &MetricsSummary) -> f64 {
        match self {
            MatchMetric::Success => s.plan_success_rate,
            MatchMetric::Coverage => s.coverage,
        }
    }
}

/// Finds the level at which `method` reaches `target` plan success within
/// [`MATCH_TOLERANCE`], by bisection on the shared scenarios.
pub fn match_operating_point(experiment: &Experiment, method: Method, target: f64) -> Result<OperatingPoint> {
    match_operating_point_by(experiment, method, MatchMetric::Success, target, MATCH_TOLERANCE)
}

/// Bisection on ε for any rate that falls as ε grows.
pub fn match_operating_point_by(
    experiment: &Experiment,
    method: Method,
    metric: MatchMetric,
    target: f64,
    tolerance: f64,
) -> Result<OperatingPoint> {
    if !(tolerance > 0.0) {
        return Err(Error::argument("matching tolerance must be positive"));
    }
    let eval = |e: f64| experiment.evaluate(method, e);
    let rate = |s: &MetricsSummary| metric.of(s);
    let point = |s: MetricsSummary, degenerate| OperatingPoint {
        epsilon: s.epsilon,
        success: s.plan_success_rate,
        degenerate,
        summary: s,
    };
    let lo = eval(MATCH_EPSILON_MIN)?;
    let hi = eval(MATCH_EPSILON_MAX)?;
    if !method.uses_epsilon() || rate(&lo) == rate(&hi) {
        if (rate(&hi) - target).abs() <= tolerance {
            return Ok(point(hi, true));
        }
        return Err(Error::NoMatch { target, best: rate(&hi), best_epsilon: hi.epsilon });
    }
    if rate(&hi) >= target - tolerance {
        if rate(&hi) <= target + tolerance {
            return Ok(point(hi, false));
        }
        // Even the loosest level overshoots the target.
        return Err(Error::NoMatch { target, best: rate(&hi), best_epsilon: hi.epsilon });
    }
    if rate(&lo) < target - tolerance {
        return Err(Error::NoMatch { target, best: rate(&lo), best_epsilon: lo.epsilon });
    }
    let (mut lo, mut hi) = (lo, hi);
    // Invariant: rate(lo) >= target > rate(hi), up to the tolerance.
    for _ in 0..40 {
        if (rate(&lo) - target).abs() <= tolerance && hi.epsilon - lo.epsilon < 1e-4 {
            break;
        }
        let mid = eval(0.5 * (lo.epsilon + hi.epsilon))?;
        if rate(&mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi.epsilon - lo.epsilon < 1e-6 {
            break;
        }
    }
    let (dl, dh) = ((rate(&lo) - target).abs(), (rate(&hi) - target).abs());
    let best = if dh < dl { hi } else { lo };
    if (rate(&best) - target).abs() <= tolerance {
        Ok(point(best, false))
    } else {
        Err(Error::NoMatch { target, best: rate(&best), best_epsilon: best.epsilon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageDistribution {
    pub target: f64,
    pub per_repeat: Vec<f64>,
    /// Nonempty bins of width [`COVERAGE_BIN_WIDTH`].
    pub histogram: Vec<HistogramBin>,
    pub fraction_meeting_target: f64,
}

pub const COVERAGE_BIN_WIDTH: f64 = 0.01;

/// Per-repeat conditional coverage of the conformal method.
pub fn coverage_distribution(config: &ExperimentConfig) -> Result<CoverageDistribution> {
    let experiment = Experiment::prepare(config)?;
    let summary = experiment.evaluate(Method::Knowno, config.epsilon)?;
    let per_repeat: Vec<f64> = summary.repeats.iter().map(|r| r.coverage).collect();
    let target = 1.0 - config.epsilon;
    let bins = (1.0 / COVERAGE_BIN_WIDTH).round() as usize;
    let mut counts = vec![0usize; bins];
    for c in &per_repeat {
        let k = ((c / COVERAGE_BIN_WIDTH).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .filter(|(_, n)| *n > 0)
        .map(|(k, count)| HistogramBin {
            low: k as f64 * COVERAGE_BIN_WIDTH,
            high: (k + 1) as f64 * COVERAGE_BIN_WIDTH,
            count,
        })
        .collect();
    let meeting = per_repeat.iter().filter(|c| **c >= target).count();
    Ok(CoverageDistribution {
        target,
        fraction_meeting_target: meeting as f64 / per_repeat.len() as f64,
        per_repeat,
        histogram,
    })
}

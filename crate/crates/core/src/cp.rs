//! Split conformal prediction over the five-label alphabet.
//!
//! Calibration scores each record by `1 - confidence[true label]`, tightens the
//! requested failure level `epsilon` to an `epsilon_hat` that also holds with
//! probability `1 - delta` over the draw of the calibration set, and takes the
//! `ceil((n + 1)(1 - epsilon_hat))`-th smallest score as the threshold `q_hat`.
//! At test time every label with confidence at least `1 - q_hat` enters the set.

use serde::{Deserialize, Serialize};

use crate::betafn::{beta_inv_cdf, BetaParams};
use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label, LabelSet};

/// Schema version written into serialized models.
pub const MODEL_VERSION: u32 = 1;

/// Ground truth attached to a calibration record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordTruth {
    Single(Label),
    Multi(LabelSet),
}

/// One calibration example: a confidence vector and its acceptable label(s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub confidence: ConfidenceVector,
    pub truth: RecordTruth,
}

impl CalibrationRecord {
    pub fn single(confidence: ConfidenceVector, label: Label) -> Self {
        CalibrationRecord {
            confidence,
            truth: RecordTruth::Single(label),
        }
    }

    pub fn multi(confidence: ConfidenceVector, labels: LabelSet) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::argument("multi-label record needs at least one true label"));
        }
        Ok(CalibrationRecord {
            confidence,
            truth: RecordTruth::Multi(labels),
        })
    }

    pub fn is_multi(&self) -> bool {
        matches!(self.truth, RecordTruth::Multi(_))
    }
}

/// Whether a model was fit on single steps or on whole sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    #[default]
    Single,
    Sequence,
}

/// A fitted conformal threshold. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub version: u32,
    #[serde(default)]
    pub mode: ModelMode,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_hat: f64,
    pub q_hat: f64,
    pub n: usize,
}

impl CalibratedModel {
    /// Confidence a label needs to enter a prediction set.
    pub fn threshold(&self) -> f64 {
        1.0 - self.q_hat
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: CalibratedModel = serde_json::from_str(s)?;
        if model.version != MODEL_VERSION {
            return Err(Error::data(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                model.version
            )));
        }
        Ok(model)
    }
}

/// Whether the finite-sample `epsilon` adjustment is applied during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    #[default]
    DatasetConditional,
    /// Calibrate at `epsilon` directly. Only the marginal guarantee holds.
    Disabled,
}

/// Labels kept by a conformal or baseline rule, with their display ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub members: LabelSet,
    /// Members by descending score, alphabet order on ties.
    pub ranking: Vec<Label>,
}

impl PredictionSet {
    /// Builds a set from members, ranking them by `scores`.
    pub fn from_members(members: LabelSet, scores: &ConfidenceVector) -> Self {
        let ranking = scores
            .ranked()
            .into_iter()
            .filter(|l| members.contains(*l))
            .collect();
        PredictionSet { members, ranking }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, label: Label) -> bool {
        self.members.contains(label)
    }

    pub fn singleton(&self) -> Option<Label> {
        (self.len() == 1).then(|| self.ranking[0])
    }
}

pub fn nonconformity_score(record: &CalibrationRecord) -> Result<f64> {
    match record.truth {
        RecordTruth::Single(label) => Ok(1.0 - record.confidence.get(label)),
        RecordTruth::Multi(_) => Err(Error::argument(
            "nonconformity score needs a single-label record; reduce it first",
        )),
    }
}

/// The `ceil((n + 1)(1 - epsilon_hat))`-th smallest score, or 1 past the end.
pub fn calibrate_quantile(scores: &[f64], epsilon_hat: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::argument("cannot calibrate on an empty score list"));
    }
    if !(epsilon_hat > 0.0 && epsilon_hat < 1.0) {
        return Err(Error::argument(format!(
            "epsilon_hat must lie in (0, 1), got {epsilon_hat}"
        )));
    }
    let n = scores.len();
    let k = quantile_rank(n, epsilon_hat);
    if k > n {
        return Ok(1.0);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// 1-based rank `ceil((n + 1)(1 - epsilon_hat))`.
///
/// The product is rounded to 12 significant digits before the ceiling so that
/// `epsilon_hat = v / (n + 1)` lands exactly on `n + 1 - v`.
fn quantile_rank(n: usize, epsilon_hat: f64) -> usize {
    let raw = (n as f64 + 1.0) * (1.0 - epsilon_hat);
    let snapped = raw.round();
    let target = if (raw - snapped).abs() <= 1e-9 * raw.max(1.0) {
        snapped
    } else {
        raw.ceil()
    };
    target.max(1.0) as usize
}

/// Lower confidence bound on test coverage when calibrating at `v / (n + 1)`.
fn coverage_bound(n: usize, v: usize, delta: f64) -> Result<f64> {
    let params = BetaParams::new((n + 1 - v) as f64, v as f64)?;
    beta_inv_cdf(params, delta)
}

/// Largest `epsilon_hat = v / (n + 1) <= epsilon` whose dataset-conditional
/// coverage bound at level `delta` is still at least `1 - epsilon`.
pub fn adjust_epsilon(epsilon: f64, delta: f64, n: usize) -> Result<f64> {
    check_levels(epsilon, delta)?;
    if n < 1 {
        return Err(Error::argument("calibration set is empty"));
    }
    let target = 1.0 - epsilon;
    let top = ((n as f64 + 1.0) * epsilon).floor() as usize;
    // The bound decreases in v, so the first feasible v from the top is the largest.
    for v in (1..=top.min(n)).rev() {
        if coverage_bound(n, v, delta)? >= target {
            return Ok(v as f64 / (n as f64 + 1.0));
        }
    }
    Err(Error::Infeasible {
        epsilon,
        delta,
        n,
        min_n: minimum_calibration_size(epsilon, delta)?,
        coverage: target,
    })
}

/// Smallest calibration size for which [`adjust_epsilon`] succeeds.
pub fn minimum_calibration_size(epsilon: f64, delta: f64) -> Result<usize> {
    check_levels(epsilon, delta)?;
    // With v = 1 the bound is delta^(1/n), and v = 1 also needs (n + 1) epsilon >= 1.
    let by_bound = (delta.ln() / (1.0 - epsilon).ln()).ceil();
    let by_grid = (1.0 / epsilon - 1.0).ceil();
    let mut n = by_bound.max(by_grid).max(1.0) as usize;
    let feasible =
        |n: usize| -> Result<bool> { Ok(n as f64 + 1.0 >= 1.0 / epsilon && coverage_bound(n, 1, delta)? >= 1.0 - epsilon) };
    while !feasible(n)? {
        n += 1;
    }
    while n > 1 && feasible(n - 1)? {
        n -= 1;
    }
    Ok(n)
}

fn check_levels(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::argument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::argument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Reduces a multi-label record to its highest-confidence acceptable label.
pub fn beta_reduce(record: &CalibrationRecord) -> Result<CalibrationRecord> {
    match record.truth {
        RecordTruth::Single(_) => Ok(record.clone()),
        RecordTruth::Multi(set) => {
            let best = record
                .confidence
                .argmax_within(set)
                .ok_or_else(|| Error::argument("multi-label record has no true labels"))?;
            Ok(CalibrationRecord::single(record.confidence, best))
        }
    }
}

pub fn fit(records: &[CalibrationRecord], epsilon: f64, delta: f64) -> Result<CalibratedModel> {
    fit_with(records, epsilon, delta, Adjustment::default())
}

pub fn fit_with(
    records: &[CalibrationRecord],
    epsilon: f64,
    delta: f64,
    adjustment: Adjustment,
) -> Result<CalibratedModel> {
    let first = records
        .first()
        .ok_or_else(|| Error::argument("cannot fit on zero records"))?;
    if records.iter().any(|r| r.is_multi() != first.is_multi()) {
        return Err(Error::argument("records mix single-label and multi-label truth"));
    }
    let scores = records
        .iter()
        .map(|r| beta_reduce(r).and_then(|r| nonconformity_score(&r)))
        .collect::<Result<Vec<_>>>()?;
    fit_scores(&scores, epsilon, delta, adjustment, ModelMode::Single)
}

/// Calibrates directly from precomputed nonconformity scores.
pub fn fit_scores(
    scores: &[f64],
    epsilon: f64,
    delta: f64,
    adjustment: Adjustment,
    mode: ModelMode,
) -> Result<CalibratedModel> {
    check_levels(epsilon, delta)?;
    let n = scores.len();
    let epsilon_hat = match adjustment {
        Adjustment::DatasetConditional => adjust_epsilon(epsilon, delta, n)?,
        Adjustment::Disabled => epsilon,
    };
    let q_hat = calibrate_quantile(scores, epsilon_hat)?;
    Ok(CalibratedModel {
        version: MODEL_VERSION,
        mode,
        epsilon,
        delta,
        epsilon_hat,
        q_hat,
        n,
    })
}

/// All labels with confidence at least `1 - q_hat` (inclusive).
pub fn predict_set(model: &CalibratedModel, confidence: &ConfidenceVector) -> PredictionSet {
    threshold_set(model.q_hat, confidence)
}

pub(crate) fn threshold_set(q_hat: f64, confidence: &ConfidenceVector) -> PredictionSet {
    let threshold = 1.0 - q_hat;
    let members = Label::ALL
        .into_iter()
        .filter(|l| confidence.get(*l) >= threshold)
        .collect();
    PredictionSet::from_members(members, confidence)
}

/// Help is needed unless the set is exactly one label; empty sets also ask.
pub fn needs_help(set: &PredictionSet) -> bool {
    set.len() != 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(s: [f64; 5]) -> ConfidenceVector {
        ConfidenceVector::new(s).unwrap()
    }

    #[test]
    fn nonconformity_examples() {
        let r = CalibrationRecord::single(cv([0.7, 0.2, 0.05, 0.04, 0.01]), Label::A);
        assert!((nonconformity_score(&r).unwrap() - 0.3).abs() < 1e-15);
        let r = CalibrationRecord::single(ConfidenceVector::one_hot(Label::C), Label::C);
        assert_eq!(nonconformity_score(&r).unwrap(), 0.0);
        let r = CalibrationRecord::single(ConfidenceVector::one_hot(Label::C), Label::B);
        assert_eq!(nonconformity_score(&r).unwrap(), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let scores: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(calibrate_quantile(&scores, 0.2).unwrap(), 0.8);
        assert_eq!(calibrate_quantile(&scores, 0.05).unwrap(), 1.0);
        assert_eq!(calibrate_quantile(&[0.5; 17], 0.3).unwrap(), 0.5);
        assert!(calibrate_quantile(&[], 0.1).is_err());
    }

    #[test]
    fn rank_lands_on_grid_points() {
        for n in [10usize, 399, 400, 401, 1000] {
            for v in 1..=n / 3 {
                let eps = v as f64 / (n as f64 + 1.0);
                assert_eq!(quantile_rank(n, eps), n + 1 - v, "n={n} v={v}");
            }
        }
    }

    #[test]
    fn adjusted_epsilon_never_exceeds_target() {
        let e = adjust_epsilon(0.15, 0.01, 400).unwrap();
        assert!(e <= 0.15 && e > 0.0);
        let v = e * 401.0;
        assert!((v - v.round()).abs() < 1e-9);
    }

    #[test]
    fn infeasible_reports_minimum_size() {
        match adjust_epsilon(0.001, 0.01, 10) {
            Err(Error::Infeasible { min_n, .. }) => {
                assert!(min_n > 10);
                assert!(adjust_epsilon(0.001, 0.01, min_n).is_ok());
                assert!(adjust_epsilon(0.001, 0.01, min_n - 1).is_err());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn single_record_is_infeasible() {
        let r = CalibrationRecord::single(cv([0.9, 0.1, 0.0, 0.0, 0.0]), Label::A);
        assert!(matches!(fit(&[r], 0.15, 0.01), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn constant_confidence_fit() {
        let r = CalibrationRecord::single(cv([0.9, 0.05, 0.05, 0.0, 0.0]), Label::A);
        let model = fit(&vec![r; 400], 0.15, 0.01).unwrap();
        assert!((model.q_hat - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mixed_modes_rejected() {
        let c = cv([0.5, 0.5, 0.0, 0.0, 0.0]);
        let a = CalibrationRecord::single(c, Label::A);
        let b = CalibrationRecord::multi(c, LabelSet::singleton(Label::B)).unwrap();
        assert!(matches!(fit(&[a, b], 0.2, 0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn prediction_set_examples() {
        let scores = cv([0.6, 0.25, 0.1, 0.04, 0.01]);
        let mut model = CalibratedModel {
            version: MODEL_VERSION,
            mode: ModelMode::Single,
            epsilon: 0.1,
            delta: 0.1,
            epsilon_hat: 0.1,
            q_hat: 0.7,
            n: 10,
        };
        assert_eq!(predict_set(&model, &scores).ranking, vec![Label::A]);
        model.q_hat = 0.95;
        assert_eq!(
            predict_set(&model, &scores).ranking,
            vec![Label::A, Label::B, Label::C]
        );
        model.q_hat = 1.0;
        assert_eq!(predict_set(&model, &scores).len(), 5);
    }

    #[test]
    fn threshold_is_inclusive() {
        let set = threshold_set(0.5, &cv([0.5, 0.5, 0.0, 0.0, 0.0]));
        assert_eq!(set.members.len(), 2);
    }

    #[test]
    fn beta_reduce_examples() {
        let ac: LabelSet = [Label::A, Label::C].into_iter().collect();
        // Rescaled to unit mass; the argmax within the set is unchanged.
        let weights = ConfidenceVector::from_weights([0.3, 0.5, 0.4, 0.0, 0.0]).unwrap();
        let r = CalibrationRecord::multi(weights, ac).unwrap();
        assert_eq!(beta_reduce(&r).unwrap().truth, RecordTruth::Single(Label::C));
        let r = CalibrationRecord::multi(cv([0.3, 0.5, 0.2, 0.0, 0.0]), LabelSet::singleton(Label::B))
            .unwrap();
        assert_eq!(beta_reduce(&r).unwrap().truth, RecordTruth::Single(Label::B));
        let r = CalibrationRecord::multi(cv([0.4, 0.2, 0.4, 0.0, 0.0]), ac).unwrap();
        assert_eq!(beta_reduce(&r).unwrap().truth, RecordTruth::Single(Label::A));
        assert!(CalibrationRecord::multi(cv([0.4, 0.2, 0.4, 0.0, 0.0]), LabelSet::EMPTY).is_err());
    }

    #[test]
    fn help_rule() {
        let c = cv([0.4, 0.3, 0.2, 0.1, 0.0]);
        let one = PredictionSet::from_members(LabelSet::singleton(Label::A), &c);
        let three = PredictionSet::from_members([Label::A, Label::B, Label::C].into_iter().collect(), &c);
        let none = PredictionSet::from_members(LabelSet::EMPTY, &c);
        assert!(!needs_help(&one));
        assert!(needs_help(&three));
        assert!(needs_help(&none));
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let model = CalibratedModel {
            version: MODEL_VERSION,
            mode: ModelMode::Sequence,
            epsilon: 0.15,
            delta: 0.01,
            epsilon_hat: 45.0 / 401.0,
            q_hat: 0.123_456_789_012_345_67,
            n: 400,
        };
        let back = CalibratedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.q_hat.to_bits(), model.q_hat.to_bits());
    }
}

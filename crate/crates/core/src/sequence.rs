//! Multi-step calibration.
//!
//! A whole episode is scored by the lowest confidence any of its steps gave to
//! the label that was taken, so a single quantile calibrated on sequences can be
//! applied one step at a time: `min_t f_t >= 1 - q` holds exactly when every
//! `f_t >= 1 - q`. The per-step sets therefore multiply out to the sequence-level
//! set without ever seeing future contexts.
//!
//! With several acceptable labels per step the acceptable sequences form a tree
//! keyed by the prefix already executed; calibration follows the branch that
//! takes the highest-confidence acceptable label at every step.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cp::{self, Adjustment, CalibratedModel, ModelMode, PredictionSet};
use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label, LabelSet};

/// Longest horizon [`noncausal_sequence_set`] will enumerate.
pub const MAX_ENUMERATION_HORIZON: usize = 6;

/// Acceptable labels for every prefix reachable by acceptable choices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TruthTree {
    nodes: BTreeMap<Vec<Label>, LabelSet>,
}

#[derive(Serialize, Deserialize)]
struct TreeNode {
    prefix: Vec<Label>,
    acceptable: LabelSet,
}

impl Serialize for TruthTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.nodes.iter().map(|(p, a)| TreeNode {
            prefix: p.clone(),
            acceptable: *a,
        }))
    }
}

impl<'de> Deserialize<'de> for TruthTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nodes = Vec::<TreeNode>::deserialize(d)?;
        Ok(TruthTree {
            nodes: nodes.into_iter().map(|n| (n.prefix, n.acceptable)).collect(),
        })
    }
}

impl TruthTree {
    pub fn new() -> Self {
        TruthTree::default()
    }

    pub fn insert(&mut self, prefix: Vec<Label>, acceptable: LabelSet) {
        self.nodes.insert(prefix, acceptable);
    }

    /// Tree whose only branch is `labels`.
    pub fn chain(labels: &[Label]) -> Self {
        let mut tree = TruthTree::new();
        for t in 0..labels.len() {
            tree.insert(labels[..t].to_vec(), LabelSet::singleton(labels[t]));
        }
        tree
    }

    pub fn acceptable(&self, prefix: &[Label]) -> Option<LabelSet> {
        self.nodes.get(prefix).copied()
    }

    /// Number of steps, i.e. the length of the longest node prefix plus one.
    pub fn horizon(&self) -> usize {
        self.nodes.keys().map(|p| p.len() + 1).max().unwrap_or(0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&[Label], LabelSet)> {
        self.nodes.iter().map(|(p, a)| (p.as_slice(), *a))
    }

    /// Checks that every prefix reachable by acceptable choices has a nonempty
    /// acceptable set at every step before the horizon.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let mut frontier = vec![Vec::new()];
        for t in 0..horizon {
            let mut next = Vec::new();
            for prefix in frontier {
                let set = self.acceptable(&prefix).unwrap_or(LabelSet::EMPTY);
                if set.is_empty() {
                    return Err(Error::data(format!(
                        "no acceptable label at step {t} after prefix {prefix:?}"
                    )));
                }
                for l in set.iter() {
                    let mut p = prefix.clone();
                    p.push(l);
                    next.push(p);
                }
            }
            frontier = next;
        }
        Ok(())
    }

    /// Every complete acceptable label sequence.
    pub fn branches(&self, horizon: usize) -> Vec<Vec<Label>> {
        let mut out = vec![Vec::new()];
        for _ in 0..horizon {
            out = out
                .into_iter()
                .flat_map(|p: Vec<Label>| {
                    let set = self.acceptable(&p).unwrap_or(LabelSet::EMPTY);
                    set.iter()
                        .map(move |l| {
                            let mut q = p.clone();
                            q.push(l);
                            q
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceTruth {
    /// One correct label per step.
    Labels(Vec<Label>),
    /// Prefix-conditioned acceptable sets.
    Tree(TruthTree),
}

/// Confidences observed along a correctly executed episode, plus its truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub confidences: Vec<ConfidenceVector>,
    pub truth: SequenceTruth,
}

impl SequenceRecord {
    pub fn horizon(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_tree(&self) -> bool {
        matches!(self.truth, SequenceTruth::Tree(_))
    }
}

/// Per-step sets built online with one shared threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequencePredictionSet {
    pub per_step: Vec<PredictionSet>,
}

/// Lowest per-step confidence assigned to `labels`.
pub fn sequence_score(record: &SequenceRecord, labels: &[Label]) -> Result<f64> {
    if labels.len() != record.horizon() || labels.is_empty() {
        return Err(Error::argument(format!(
            "label sequence has length {}, record has {} steps",
            labels.len(),
            record.horizon()
        )));
    }
    Ok(record
        .confidences
        .iter()
        .zip(labels)
        .map(|(c, l)| c.get(*l))
        .fold(f64::INFINITY, f64::min))
}

/// Prunes the acceptable tree to the branch that takes the highest-confidence
/// acceptable label at each step.
pub fn beta_bar_reduce(record: &SequenceRecord) -> Result<Vec<Label>> {
    match &record.truth {
        SequenceTruth::Labels(labels) => {
            if labels.len() != record.horizon() {
                return Err(Error::data("label sequence length differs from horizon"));
            }
            Ok(labels.clone())
        }
        SequenceTruth::Tree(tree) => {
            let mut branch = Vec::with_capacity(record.horizon());
            for (t, confidence) in record.confidences.iter().enumerate() {
                let acceptable = tree.acceptable(&branch).unwrap_or(LabelSet::EMPTY);
                let pick = confidence.argmax_within(acceptable).ok_or_else(|| {
                    Error::data(format!(
                        "empty acceptable set at step {t} after prefix {branch:?}"
                    ))
                })?;
                branch.push(pick);
            }
            Ok(branch)
        }
    }
}

pub fn fit_sequence(records: &[SequenceRecord], epsilon: f64, delta: f64) -> Result<CalibratedModel> {
    fit_sequence_with(records, epsilon, delta, Adjustment::default())
}

/// Calibrates on `1 - sequence_score(branch)`; `n` counts sequences.
pub fn fit_sequence_with(
    records: &[SequenceRecord],
    epsilon: f64,
    delta: f64,
    adjustment: Adjustment,
) -> Result<CalibratedModel> {
    let first = records
        .first()
        .ok_or_else(|| Error::argument("cannot fit on zero sequences"))?;
    if records.iter().any(|r| r.is_tree() != first.is_tree()) {
        return Err(Error::argument("records mix label-sequence and tree truth"));
    }
    let scores = records
        .iter()
        .map(|r| {
            let branch = beta_bar_reduce(r)?;
            Ok(1.0 - sequence_score(r, &branch)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mode = if records.iter().all(|r| r.horizon() == 1) {
        ModelMode::Single
    } else {
        ModelMode::Sequence
    };
    cp::fit_scores(&scores, epsilon, delta, adjustment, mode)
}

/// The set at one step, using the sequence-calibrated threshold.
pub fn causal_step_set(model: &CalibratedModel, step_confidence: &ConfidenceVector) -> PredictionSet {
    cp::predict_set(model, step_confidence)
}

/// Builds the per-step sets for a whole record.
pub fn causal_sets(model: &CalibratedModel, record: &SequenceRecord) -> SequencePredictionSet {
    SequencePredictionSet {
        per_step: record
            .confidences
            .iter()
            .map(|c| causal_step_set(model, c))
            .collect(),
    }
}

/// Cartesian product of the per-step sets.
pub fn product(sets: &SequencePredictionSet) -> BTreeSet<Vec<Label>> {
    let mut out = BTreeSet::from([Vec::new()]);
    for set in &sets.per_step {
        out = out
            .into_iter()
            .flat_map(|p| {
                set.members.iter().map(move |l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    out
}

/// Every label sequence whose min-over-steps confidence clears `1 - q_hat`,
/// found by enumerating all `5^T` sequences.
pub fn noncausal_sequence_set(
    model: &CalibratedModel,
    record: &SequenceRecord,
) -> Result<BTreeSet<Vec<Label>>> {
    let horizon = record.horizon();
    if horizon == 0 || horizon > MAX_ENUMERATION_HORIZON {
        return Err(Error::argument(format!(
            "enumeration needs 1..={MAX_ENUMERATION_HORIZON} steps, record has {horizon}"
        )));
    }
    let threshold = model.threshold();
    let mut out = BTreeSet::new();
    let total = Label::COUNT.pow(horizon as u32);
    let mut labels = vec![Label::A; horizon];
    for code in 0..total {
        let mut rest = code;
        for slot in labels.iter_mut().rev() {
            *slot = Label::ALL[rest % Label::COUNT];
            rest /= Label::COUNT;
        }
        if sequence_score(record, &labels)? >= threshold {
            out.insert(labels.clone());
        }
    }
    Ok(out)
}

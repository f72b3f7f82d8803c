//! Comparison methods: cumulative-confidence sets over raw scores or ensemble
//! frequencies, a confidence-threshold binary trigger, and never asking.

mod prompt;

use serde::{Deserialize, Serialize};

use crate::cp::{CalibratedModel, PredictionSet};
use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label, LabelSet};
use crate::scenario::{Policy, Scenario};
use crate::scorer::{synthetic_score, SyntheticSpec};
use crate::seed;

pub use prompt::{
    binary_action_prompt, binary_certainty_prompt, parse_certainty, parse_prompt_set, prompt_set_prompt,
};

pub const DEFAULT_ENSEMBLE_DRAWS: usize = 20;

/// Slack on the cumulative sum so that float rounding never drops the
/// crossing option.
const CUMULATIVE_SLACK: f64 = 1e-12;

/// How a run forms its prediction sets. The target level ε comes from the
/// experiment, not from the method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    #[serde(alias = "conformal")]
    Knowno,
    Simple,
    Ensemble {
        #[serde(default = "default_draws")]
        draws: usize,
    },
    BinaryThreshold {
        theta: f64,
    },
    #[serde(alias = "no_help")]
    Nohelp,
}

fn default_draws() -> usize {
    DEFAULT_ENSEMBLE_DRAWS
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Knowno => "knowno",
            Method::Simple => "simple",
            Method::Ensemble { .. } => "ensemble",
            Method::BinaryThreshold { .. } => "binary_threshold",
            Method::Nohelp => "nohelp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Method::Ensemble { draws } if draws < 2 => {
                Err(Error::argument("ensemble needs at least 2 draws"))
            }
            Method::BinaryThreshold { theta } if !(theta > 0.0 && theta < 1.0) => {
                Err(Error::argument("binary threshold must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Whether the method uses ε at all.
    pub fn uses_epsilon(&self) -> bool {
        matches!(self, Method::Knowno | Method::Simple | Method::Ensemble { .. })
    }

    pub fn policy<'a>(&self, epsilon: f64, model: Option<&'a CalibratedModel>) -> Result<Policy<'a>> {
        self.validate()?;
        Ok(match *self {
            Method::Knowno => Policy::Conformal(
                model.ok_or_else(|| Error::argument("the conformal method needs a calibrated model"))?,
            ),
            Method::Simple => Policy::Simple { epsilon },
            Method::Ensemble { draws } => Policy::Ensemble { epsilon, draws },
            Method::BinaryThreshold { theta } => Policy::Binary { theta },
            Method::Nohelp => Policy::NoHelp,
        })
    }
}

/// Smallest top-ranked prefix whose cumulative confidence reaches `1 − ε`.
pub fn simple_set(confidence: &ConfidenceVector, epsilon: f64) -> PredictionSet {
    let target = 1.0 - epsilon - CUMULATIVE_SLACK;
    let mut members = LabelSet::EMPTY;
    let mut total = 0.0;
    for label in confidence.ranked() {
        members.insert(label);
        total += confidence.get(label);
        if total >= target {
            break;
        }
    }
    PredictionSet::from_members(members, confidence)
}

/// Argmax frequencies over `draws` independently resampled synthetic vectors.
pub fn ensemble_scores(
    spec: &SyntheticSpec,
    scenario: &Scenario,
    step: usize,
    prefix: &[Label],
    draws: usize,
    rng_seed: u64,
) -> Result<ConfidenceVector> {
    if draws < 2 {
        return Err(Error::argument("ensemble needs at least 2 draws"));
    }
    let counts = ensemble_counts(spec, scenario, step, prefix, draws, rng_seed)?;
    ConfidenceVector::new(counts.map(|c| c as f64 / draws as f64))
}

/// Raw argmax counts behind [`ensemble_scores`].
pub fn ensemble_counts(
    spec: &SyntheticSpec,
    scenario: &Scenario,
    step: usize,
    prefix: &[Label],
    draws: usize,
    rng_seed: u64,
) -> Result<[usize; 5]> {
    let mut counts = [0usize; 5];
    for k in 0..draws as u64 {
        let draw_seed = seed::derive(rng_seed, &[seed::tag("ensemble"), k]);
        let v = synthetic_score(spec, scenario, step, prefix, draw_seed)?;
        counts[v.argmax().index()] += 1;
    }
    Ok(counts)
}

/// Certain when the top score reaches `theta`.
pub fn binary_threshold(confidence: &ConfidenceVector, theta: f64) -> bool {
    confidence.get(confidence.argmax()) >= theta
}

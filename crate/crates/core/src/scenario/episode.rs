use serde::{Deserialize, Serialize};

use super::{Node, Scenario};
use crate::baselines::{binary_threshold, ensemble_scores, simple_set};
use crate::cp::{needs_help, CalibratedModel, ModelMode, PredictionSet};
use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label, LabelSet};
use crate::scorer::ConfidenceSource;
use crate::sequence::causal_step_set;

/// How a prediction set is formed at each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy<'a> {
    Conformal(&'a CalibratedModel),
    Simple { epsilon: f64 },
    Ensemble { epsilon: f64, draws: usize },
    /// Execute the argmax when its score reaches `theta`, otherwise show every option.
    Binary { theta: f64 },
    NoHelp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HelpResponse {
    Choose(Label),
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub confidence: ConfidenceVector,
    pub set: LabelSet,
    pub ranking: Vec<Label>,
    pub acceptable: LabelSet,
    pub help: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<HelpResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed: Option<Label>,
}

impl StepRecord {
    /// Whether the set contained at least one acceptable label.
    pub fn covered(&self) -> bool {
        !self.set.intersection(self.acceptable).is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub scenario_id: u64,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl Episode {
    pub fn help_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.help).count()
    }

    pub fn any_help(&self) -> bool {
        self.steps.iter().any(|s| s.help)
    }

    pub fn covered(&self) -> bool {
        self.steps.iter().all(StepRecord::covered)
    }
}

/// Source of answers when the robot asks for help.
pub trait HelpProvider {
    fn help(
        &mut self,
        scenario: &Scenario,
        node: &Node,
        step: usize,
        prefix: &[Label],
        set: &PredictionSet,
    ) -> Result<HelpResponse>;
}

/// Simulated person who picks the highest-ranked acceptable option.
#[derive(Debug, Clone, Copy, Default)]
pub struct RankedOracle;

impl HelpProvider for RankedOracle {
    fn help(
        &mut self,
        scenario: &Scenario,
        _node: &Node,
        step: usize,
        prefix: &[Label],
        set: &PredictionSet,
    ) -> Result<HelpResponse> {
        oracle_help(scenario, step, prefix, set)
    }
}

/// Picks the acceptable label ranked highest in the set, or halts when the set
/// holds none.
pub fn oracle_help(
    scenario: &Scenario,
    step: usize,
    prefix: &[Label],
    set: &PredictionSet,
) -> Result<HelpResponse> {
    let acceptable = scenario.acceptable(step, prefix)?;
    Ok(set
        .ranking
        .iter()
        .find(|l| acceptable.contains(**l))
        .map_or(HelpResponse::Halt, |l| HelpResponse::Choose(*l)))
}

fn step_set(
    policy: &Policy<'_>,
    source: &dyn ConfidenceSource,
    scenario: &Scenario,
    step: usize,
    prefix: &[Label],
    seed: u64,
) -> Result<(ConfidenceVector, PredictionSet)> {
    if let Policy::Ensemble { epsilon, draws } = *policy {
        let spec = source
            .synthetic()
            .ok_or_else(|| Error::Unsupported("ensemble sets need a synthetic scorer".into()))?;
        let freq = ensemble_scores(spec, scenario, step, prefix, draws, seed)?;
        return Ok((freq, simple_set(&freq, epsilon)));
    }
    let confidence = source.confidence(scenario, step, prefix, seed)?;
    let set = match *policy {
        Policy::Conformal(model) => causal_step_set(model, &confidence),
        Policy::Simple { epsilon } => simple_set(&confidence, epsilon),
        Policy::Binary { theta } => {
            let members = if binary_threshold(&confidence, theta) {
                LabelSet::singleton(confidence.argmax())
            } else {
                LabelSet::FULL
            };
            PredictionSet::from_members(members, &confidence)
        }
        Policy::NoHelp => PredictionSet::from_members(LabelSet::singleton(confidence.argmax()), &confidence),
        Policy::Ensemble { .. } => unreachable!("handled above"),
    };
    Ok((confidence, set))
}

/// Runs one episode: score, form a set, execute a singleton or ask for help,
/// and stop at the first wrong action or halt.
pub fn run_episode(
    scenario: &Scenario,
    source: &dyn ConfidenceSource,
    policy: Policy<'_>,
    helper: &mut dyn HelpProvider,
    seed: u64,
) -> Result<Episode> {
    if let Policy::Conformal(model) = policy {
        if model.mode == ModelMode::Single && scenario.horizon > 1 {
            return Err(Error::argument(
                "a single-step model cannot drive a multi-step scenario",
            ));
        }
    }
    let mut prefix: Vec<Label> = Vec::with_capacity(scenario.horizon);
    let mut steps = Vec::with_capacity(scenario.horizon);
    let mut outcome = Outcome::Success;
    for step in 0..scenario.horizon {
        let node = scenario.node(step, &prefix)?;
        let (confidence, set) = step_set(&policy, source, scenario, step, &prefix, seed)?;
        let help = needs_help(&set);
        let (response, executed) = if help {
            match helper.help(scenario, &node, step, &prefix, &set)? {
                HelpResponse::Choose(l) => (Some(HelpResponse::Choose(l)), Some(l)),
                HelpResponse::Halt => (Some(HelpResponse::Halt), None),
            }
        } else {
            (None, set.singleton())
        };
        steps.push(StepRecord {
            step,
            confidence,
            set: set.members,
            ranking: set.ranking.clone(),
            acceptable: node.acceptable,
            help,
            response,
            executed,
        });
        match executed {
            None => {
                outcome = Outcome::Halted;
                break;
            }
            Some(l) if !node.acceptable.contains(l) => {
                outcome = Outcome::Failure;
                break;
            }
            Some(l) => prefix.push(l),
        }
    }
    Ok(Episode { scenario_id: scenario.id, steps, outcome })
}

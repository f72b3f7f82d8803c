//! Synthetic task distributions, the simulated helper, and episode execution.
//!
//! A scenario carries everything an episode needs: the option texts shown at
//! each step, which labels are acceptable, and the latent intent prior that the
//! synthetic scorer is built around. Single-step tabletop settings store their
//! one node directly; food sorting derives each node from the items still on
//! the table.

mod episode;
mod io;
mod sorting;
mod tabletop;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::label::{Label, LabelSet, NOT_LISTED};
use crate::seed;
use crate::sequence::TruthTree;

pub use episode::{
    oracle_help, run_episode, Episode, HelpProvider, HelpResponse, Outcome, Policy, RankedOracle,
    StepRecord,
};
pub use io::{
    read_episodes, read_scenarios, write_episodes, write_scenarios, EPISODE_FORMAT, EPISODE_FORMAT_VERSION,
    SCENARIO_FORMAT, SCENARIO_FORMAT_VERSION,
};
pub use sorting::{FoodItem, Preference, DISLIKED_FOODS, LIKED_FOODS};

/// Mass spread uniformly over all five labels in every intent prior.
pub const PRIOR_LEAKAGE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Attribute,
    Numeric,
    Spatial,
    Sorting,
    /// Hand-written scenarios loaded from file (e.g. for a live model).
    Custom,
}

impl Setting {
    pub const SINGLE_STEP: [Setting; 3] = [Setting::Attribute, Setting::Numeric, Setting::Spatial];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Attribute => "attribute",
            Setting::Numeric => "numeric",
            Setting::Spatial => "spatial",
            Setting::Sorting => "sorting",
            Setting::Custom => "custom",
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Setting::Sorting => sorting::HORIZON,
            _ => 1,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attribute" => Ok(Setting::Attribute),
            "numeric" => Ok(Setting::Numeric),
            "spatial" => Ok(Setting::Spatial),
            "sorting" => Ok(Setting::Sorting),
            "custom" => Ok(Setting::Custom),
            other => Err(Error::argument(format!("unknown setting {other:?}"))),
        }
    }
}

/// What counts as a correct plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Single(Label),
    Set(LabelSet),
    Tree(TruthTree),
}

/// One sampled task instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: u64,
    pub setting: Setting,
    pub scene: String,
    pub instruction: String,
    /// Options at the first step in label order; `E` is always the catch-all.
    pub option_texts: [String; 5],
    pub truth: Truth,
    /// Latent difficulty in `[0, 1]`; flattens the synthetic scorer.
    pub ambiguity: f64,
    pub horizon: usize,
    /// Planner-side belief over the first-step options.
    pub intent_prior: [f64; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<FoodItem>>,
}

/// The decision faced at one step, given the labels already executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub context: String,
    pub options: [String; 5],
    pub acceptable: LabelSet,
    pub prior: [f64; 5],
    pub ambiguity: f64,
}

impl Scenario {
    /// Decision at `step` after executing `prefix` (which must be acceptable so far).
    pub fn node(&self, step: usize, prefix: &[Label]) -> Result<Node> {
        if prefix.len() != step || step >= self.horizon {
            return Err(Error::argument(format!(
                "step {step} with prefix of length {} is outside horizon {}",
                prefix.len(),
                self.horizon
            )));
        }
        if let Some(items) = &self.items {
            return sorting::node(self, items, prefix);
        }
        let acceptable = match &self.truth {
            Truth::Single(l) => LabelSet::singleton(*l),
            Truth::Set(s) => *s,
            Truth::Tree(t) => t
                .acceptable(prefix)
                .ok_or_else(|| Error::data(format!("prefix {prefix:?} is not in the truth tree")))?,
        };
        Ok(Node {
            context: self.context_text(),
            options: self.option_texts.clone(),
            acceptable,
            prior: self.intent_prior,
            ambiguity: self.ambiguity,
        })
    }

    /// Acceptable labels at a node, without building option texts.
    pub fn acceptable(&self, step: usize, prefix: &[Label]) -> Result<LabelSet> {
        match &self.truth {
            Truth::Single(l) if step == 0 => Ok(LabelSet::singleton(*l)),
            Truth::Set(s) if step == 0 => Ok(*s),
            Truth::Tree(t) => t
                .acceptable(prefix)
                .ok_or_else(|| Error::data(format!("prefix {prefix:?} is not in the truth tree"))),
            _ => Err(Error::argument(format!("step {step} outside single-step scenario"))),
        }
    }

    /// The label the latent intent points at for this node. Single-label
    /// scenarios return their truth; otherwise one acceptable label is drawn in
    /// proportion to the prior, deterministically per node.
    pub fn intended(&self, step: usize, prefix: &[Label], node: &Node) -> Label {
        if let Truth::Single(l) = self.truth {
            return l;
        }
        let members: Vec<Label> = node.acceptable.iter().collect();
        if members.len() == 1 {
            return members[0];
        }
        let total: f64 = members.iter().map(|l| node.prior[l.index()]).sum();
        let u = unit_hash(seed::derive(self.id, &[seed::tag("intent"), step as u64, prefix_code(prefix)]));
        let mut acc = 0.0;
        for l in &members {
            acc += node.prior[l.index()] / total;
            if u < acc {
                return *l;
            }
        }
        *members.last().expect("acceptable set is nonempty")
    }

    pub fn context_text(&self) -> String {
        format!("We: {}\nWe: {}", self.scene, self.instruction)
    }

    /// Checks structural invariants of a scenario.
    pub fn validate(&self) -> Result<()> {
        if self.option_texts[4] != NOT_LISTED {
            return Err(Error::data("option E must be the catch-all option"));
        }
        if !(0.0..=1.0).contains(&self.ambiguity) {
            return Err(Error::data("ambiguity must lie in [0, 1]"));
        }
        match (&self.truth, self.horizon) {
            (Truth::Single(_), 1) => {}
            (Truth::Set(s), 1) if !s.is_empty() => {}
            (Truth::Tree(t), h) if h >= 1 => t.validate(h)?,
            _ => return Err(Error::data("truth does not match the horizon")),
        }
        if self.setting != Setting::Custom && self.horizon != self.setting.horizon() {
            return Err(Error::data(format!(
                "{} scenarios have horizon {}",
                self.setting,
                self.setting.horizon()
            )));
        }
        Ok(())
    }
}

/// Draws `count` i.i.d. scenarios; identical arguments give identical lists.
pub fn sample_scenarios(setting: Setting, count: usize, rng_seed: u64) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::argument("scenario count must be at least 1"));
    }
    (0..count as u64)
        .map(|i| {
            let id = seed::derive(rng_seed, &[seed::tag(setting.name()), i, seed::tag("id")]);
            let mut rng = seed::rng(rng_seed, &[seed::tag(setting.name()), i]);
            let scenario = match setting {
                Setting::Attribute => tabletop::attribute(id, &mut rng),
                Setting::Numeric => tabletop::numeric(id, &mut rng),
                Setting::Spatial => tabletop::spatial(id, &mut rng),
                Setting::Sorting => sorting::sample(id, &mut rng),
                Setting::Custom => {
                    return Err(Error::argument("custom scenarios are loaded from file, not sampled"))
                }
            };
            scenario.validate()?;
            Ok(scenario)
        })
        .collect()
}

/// Packs a label prefix into an integer for seed derivation.
pub(crate) fn prefix_code(prefix: &[Label]) -> u64 {
    prefix
        .iter()
        .fold(1u64, |acc, l| acc.wrapping_mul(8).wrapping_add(l.index() as u64 + 1))
}

/// Maps a hash to `[0, 1)`.
pub(crate) fn unit_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Turns weighted candidate options into an intent prior with leakage.
pub(crate) fn prior_from_weights(weights: &[f64; 5]) -> [f64; 5] {
    let total: f64 = weights.iter().sum();
    let mut prior = [0.0; 5];
    for (p, w) in prior.iter_mut().zip(weights) {
        *p = (1.0 - PRIOR_LEAKAGE) * w / total + PRIOR_LEAKAGE / 5.0;
    }
    prior
}

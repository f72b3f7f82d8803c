//! Confidence sources over the five option labels.
//!
//! The synthetic scorer is built so that, with `temperature = 1` and
//! `corruption = 0`, its output is exactly the posterior probability of the
//! intended label. For a node with intent prior `π`, effective concentration
//! `κ`, and intended label `I ~ π`, it emits `V ~ Dirichlet(π/κ + e_I)`. By
//! Dirichlet–multinomial conjugacy `P(I = y | V) = V_y`, so the vector is
//! calibrated for every `κ`: `κ → 0` returns the prior itself and `κ → ∞`
//! returns a one-hot on `I`.

mod llm;
mod prompt;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{ConfidenceVector, Label};
use crate::scenario::{prefix_code, unit_hash, Scenario};
use crate::seed;

pub use llm::{parse_top_logprobs, LlmClient, API_KEY_ENV};
pub use prompt::{
    build_mcqa_prompt, option_generation_prompt, parse_generated_options, McqaPrompt, OptionOrder,
};

/// How much ambiguity flattens the scorer: `κ_eff = κ (1 − 0.8 a)`.
pub const AMBIGUITY_FLATTENING: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Sharpness on the intended label; `f64::INFINITY` gives one-hot output.
    pub concentration: f64,
    /// Probability that a node's mode is moved to a wrong label.
    #[serde(default)]
    pub corruption: f64,
    /// Exponent `1/τ` applied to probabilities before renormalizing.
    #[serde(default = "unit")]
    pub temperature: f64,
}

fn unit() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(concentration: f64, corruption: f64, temperature: f64) -> Result<Self> {
        let spec = Self { concentration, corruption, temperature };
        spec.validate()?;
        Ok(spec)
    }

    /// The calibrated scorer with no corruption and no temperature.
    pub fn truthful(concentration: f64) -> Self {
        Self { concentration, corruption: 0.0, temperature: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0) {
            return Err(Error::argument("concentration must be positive"));
        }
        if !(0.0..1.0).contains(&self.corruption) {
            return Err(Error::argument("corruption must lie in [0, 1)"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::argument("temperature must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSpec {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

fn default_in_flight() -> usize {
    4
}

impl LlmSpec {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
            max_in_flight: default_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerSpec {
    Synthetic(SyntheticSpec),
    Llm(LlmSpec),
}

impl ScorerSpec {
    pub fn synthetic(&self) -> Result<&SyntheticSpec> {
        match self {
            ScorerSpec::Synthetic(s) => Ok(s),
            ScorerSpec::Llm(_) => Err(Error::Unsupported("operation needs a synthetic scorer".into())),
        }
    }

    /// Builds the scorer, opening an HTTP client in llm mode.
    pub fn build(&self) -> Result<Scorer> {
        match self {
            ScorerSpec::Synthetic(s) => {
                s.validate()?;
                Ok(Scorer::Synthetic(*s))
            }
            ScorerSpec::Llm(spec) => Ok(Scorer::Llm(LlmClient::new(spec.clone())?)),
        }
    }
}

/// Anything that scores the options at a scenario node.
pub trait ConfidenceSource: Sync {
    fn confidence(
        &self,
        scenario: &Scenario,
        step: usize,
        prefix: &[Label],
        seed: u64,
    ) -> Result<ConfidenceVector>;

    /// Spec to resample from when building ensembles.
    fn synthetic(&self) -> Option<&SyntheticSpec> {
        None
    }
}

impl ConfidenceSource for SyntheticSpec {
    fn confidence(
        &self,
        scenario: &Scenario,
        step: usize,
        prefix: &[Label],
        seed: u64,
    ) -> Result<ConfidenceVector> {
        synthetic_score(self, scenario, step, prefix, seed)
    }

    fn synthetic(&self) -> Option<&SyntheticSpec> {
        Some(self)
    }
}

#[derive(Debug)]
pub enum Scorer {
    Synthetic(SyntheticSpec),
    Llm(LlmClient),
}

impl ConfidenceSource for Scorer {
    fn confidence(
        &self,
        scenario: &Scenario,
        step: usize,
        prefix: &[Label],
        seed: u64,
    ) -> Result<ConfidenceVector> {
        match self {
            Scorer::Synthetic(s) => synthetic_score(s, scenario, step, prefix, seed),
            Scorer::Llm(client) => {
                let node = scenario.node(step, prefix)?;
                let generated: [String; 4] = std::array::from_fn(|i| node.options[i].clone());
                let order_seed =
                    seed::derive(seed, &[scenario.id, seed::tag("order"), step as u64, prefix_code(prefix)]);
                let prompt = build_mcqa_prompt(&node.context, generated, OptionOrder::Shuffled(order_seed));
                client.score(&prompt)
            }
        }
    }

    fn synthetic(&self) -> Option<&SyntheticSpec> {
        match self {
            Scorer::Synthetic(s) => Some(s),
            Scorer::Llm(_) => None,
        }
    }
}

/// Raises each probability to `1/τ` and renormalizes.
pub fn apply_temperature(scores: [f64; 5], temperature: f64) -> Result<[f64; 5]> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::argument("temperature must be positive and finite"));
    }
    let powered = scores.map(|p| p.powf(1.0 / temperature));
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return Err(Error::argument("cannot rescale an all-zero vector"));
    }
    Ok(powered.map(|p| p / total))
}

/// Effective concentration at a node of the given ambiguity.
pub fn effective_concentration(concentration: f64, ambiguity: f64) -> f64 {
    concentration * (1.0 - AMBIGUITY_FLATTENING * ambiguity)
}

/// Synthetic confidence at one node. Pure in `(spec, scenario, step, prefix, seed)`.
///
/// Corruption is decided per scenario node, independently of `seed`, so that
/// resampling the noise (as ensembles do) cannot undo a confidently wrong node.
pub fn synthetic_score(
    spec: &SyntheticSpec,
    scenario: &Scenario,
    step: usize,
    prefix: &[Label],
    seed: u64,
) -> Result<ConfidenceVector> {
    spec.validate()?;
    let node = scenario.node(step, prefix)?;
    let intended = scenario.intended(step, prefix, &node);
    let kappa = effective_concentration(spec.concentration, node.ambiguity);
    let code = prefix_code(prefix);

    let mut v = [0.0; 5];
    if kappa.is_infinite() {
        v[intended.index()] = 1.0;
    } else {
        let mut rng = seed::rng(seed, &[scenario.id, seed::tag("score"), step as u64, code]);
        for label in Label::ALL {
            let shape = node.prior[label.index()] / kappa + if label == intended { 1.0 } else { 0.0 };
            // A zero Dirichlet parameter is a point mass at zero.
            if shape > 0.0 {
                let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
                v[label.index()] = gamma.sample(&mut rng);
            }
        }
        let total: f64 = v.iter().sum();
        v = v.map(|g| g / total);
    }

    let coin = unit_hash(seed::derive(scenario.id, &[seed::tag("corrupt"), step as u64, code]));
    if coin < spec.corruption {
        let wrong: Vec<Label> = Label::ALL
            .into_iter()
            .filter(|l| !node.acceptable.contains(*l))
            .collect();
        if !wrong.is_empty() {
            let pick = seed::derive(scenario.id, &[seed::tag("corrupt-label"), step as u64, code]);
            let w = wrong[(pick % wrong.len() as u64) as usize];
            let mode = ConfidenceVector::from_weights(v)?.argmax();
            v.swap(mode.index(), w.index());
        }
    }

    if spec.temperature != 1.0 {
        v = apply_temperature(v, spec.temperature)?;
    }
    ConfidenceVector::from_weights(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scenarios, Setting};

    #[test]
    fn infinite_concentration_is_one_hot() {
        let spec = SyntheticSpec::truthful(f64::INFINITY);
        for s in sample_scenarios(Setting::Attribute, 50, 1).unwrap() {
            let node = s.node(0, &[]).unwrap();
            let v = synthetic_score(&spec, &s, 0, &[], 3).unwrap();
            assert_eq!(v, ConfidenceVector::one_hot(s.intended(0, &[], &node)));
        }
    }

    #[test]
    fn temperature_example() {
        let p = [0.64, 0.16, 0.1, 0.06, 0.04];
        let out = apply_temperature(p, 3.0).unwrap();
        let roots: Vec<f64> = p.iter().map(|x: &f64| x.cbrt()).collect();
        let total: f64 = roots.iter().sum();
        for (o, r) in out.iter().zip(&roots) {
            assert!((o - r / total).abs() < 1e-15);
        }
        assert!(apply_temperature(p, 0.0).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SyntheticSpec::new(4.0, 0.1, 1.5).unwrap();
        let s = &sample_scenarios(Setting::Spatial, 1, 4).unwrap()[0];
        let a = synthetic_score(&spec, s, 0, &[], 10).unwrap();
        let b = synthetic_score(&spec, s, 0, &[], 10).unwrap();
        let c = synthetic_score(&spec, s, 0, &[], 11).unwrap();
        assert_eq!(a.as_array().map(f64::to_bits), b.as_array().map(f64::to_bits));
        assert_ne!(a, c);
    }

    #[test]
    fn corruption_moves_mode_off_acceptable() {
        let spec = SyntheticSpec::new(f64::INFINITY, 0.999, 1.0).unwrap();
        for s in sample_scenarios(Setting::Numeric, 50, 2).unwrap() {
            let node = s.node(0, &[]).unwrap();
            let v = synthetic_score(&spec, &s, 0, &[], 0).unwrap();
            assert!(!node.acceptable.contains(v.argmax()));
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(SyntheticSpec::new(0.0, 0.0, 1.0).is_err());
        assert!(SyntheticSpec::new(1.0, 1.0, 1.0).is_err());
        assert!(SyntheticSpec::new(1.0, 0.0, f64::NAN).is_err());
        let llm = ScorerSpec::Llm(LlmSpec::new("http://localhost:1", "m"));
        assert!(matches!(llm.synthetic(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn spec_json_uses_kind_tag() {
        let spec = ScorerSpec::Synthetic(SyntheticSpec::new(4.0, 0.05, 1.0).unwrap());
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"synthetic\""), "{json}");
        assert_eq!(serde_json::from_str::<ScorerSpec>(&json).unwrap(), spec);
    }
}

//! Experiment flags and their merge with an optional JSON config file.
//!
//! Precedence is: a flag typed on the command line, then the config file, then
//! the flag's default.

use std::path::PathBuf;

use askhelp::{Adjustment, Error, ExperimentConfig, Result, Setting};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, ValueEnum};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Attribute,
    Numeric,
    Spatial,
    Sorting,
    Custom,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Attribute => Setting::Attribute,
            SettingArg::Numeric => Setting::Numeric,
            SettingArg::Spatial => Setting::Spatial,
            SettingArg::Sorting => Setting::Sorting,
            SettingArg::Custom => Setting::Custom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MethodArg {
    Knowno,
    Simple,
    Ensemble,
    BinaryThreshold,
    Nohelp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Synthetic,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum AdjustmentArg {
    DatasetConditional,
    Disabled,
}

fn adjustment_name(a: AdjustmentArg) -> &'static str {
    match a {
        AdjustmentArg::DatasetConditional => "dataset_conditional",
        AdjustmentArg::Disabled => "disabled",
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// JSON experiment config; flags typed on the command line override its values [default: none].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SettingArg::Numeric)]
    pub setting: SettingArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Knowno)]
    pub method: MethodArg,
    /// Argmax draws per ensemble set.
    #[arg(long, default_value_t = askhelp::baselines::DEFAULT_ENSEMBLE_DRAWS)]
    pub draws: usize,
    /// Top-score threshold for the binary trigger.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Target miscoverage level.
    #[arg(long, default_value_t = 0.15)]
    pub epsilon: f64,
    /// Allowed probability that a calibration draw misses the target.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Calibration scenarios per repeat.
    #[arg(long, visible_alias = "n", default_value_t = 400)]
    pub calibration_size: usize,
    /// Test scenarios per repeat.
    #[arg(long, default_value_t = 200)]
    pub test_size: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Finite-sample level adjustment; `disabled` is a diagnostic.
    #[arg(long, value_enum, default_value_t = AdjustmentArg::DatasetConditional)]
    pub adjustment: AdjustmentArg,
    #[arg(long, value_enum, default_value_t = ScorerArg::Synthetic)]
    pub scorer: ScorerArg,
    /// Synthetic scorer sharpness.
    #[arg(long, default_value_t = 4.0)]
    pub concentration: f64,
    /// Synthetic scorer probability of moving a node's mode to a wrong label.
    #[arg(long, default_value_t = 0.05)]
    pub corruption: f64,
    /// Synthetic scorer temperature.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Completion endpoint URL for the llm scorer [default: none].
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent to the completion endpoint.
    #[arg(long, default_value = "default")]
    pub llm_model: String,
    /// Per-request timeout in seconds for the llm scorer.
    #[arg(long, default_value_t = 30.0)]
    pub timeout_secs: f64,
    /// Retries per llm request.
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    /// Concurrent llm requests.
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Root seed (required unless the config file sets it).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Writes `value` under `key` when the flag was typed or the file left it unset.
fn put(obj: &mut Map<String, Value>, key: &str, value: Value, typed: bool) {
    if typed || !obj.contains_key(key) {
        obj.insert(key.to_string(), value);
    }
}

fn object<'a>(parent: &'a mut Map<String, Value>, key: &str) -> Result<&'a mut Map<String, Value>> {
    parent
        .get_mut(key)
        .and_then(Value::as_object_mut)
        .ok_or_else(|| Error::Argument(format!("config field {key:?} must be an object")))
}

impl ExperimentArgs {
    /// Builds the experiment config from the file (if any) and the flags.
    pub fn resolve(&self, matches: &ArgMatches) -> Result<ExperimentConfig> {
        let typed = |id: &str| matches.value_source(id) == Some(ValueSource::CommandLine);
        let mut root = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                match serde_json::from_str::<Value>(&text)? {
                    Value::Object(m) => m,
                    _ => return Err(Error::Data("config file must hold a JSON object".into())),
                }
            }
            None => Map::new(),
        };

        let setting: Setting = self.setting.into();
        put(&mut root, "setting", json!(setting), typed("setting"));
        put(&mut root, "epsilon", json!(self.epsilon), typed("epsilon"));
        put(&mut root, "delta", json!(self.delta), typed("delta"));
        put(&mut root, "calibration_size", json!(self.calibration_size), typed("calibration_size"));
        put(&mut root, "test_size", json!(self.test_size), typed("test_size"));
        put(&mut root, "repeats", json!(self.repeats), typed("repeats"));
        put(&mut root, "threads", json!(self.threads), typed("threads"));
        put(&mut root, "adjustment", json!(adjustment_name(self.adjustment)), typed("adjustment"));
        match self.seed {
            Some(seed) => put(&mut root, "seed", json!(seed), true),
            None if !root.contains_key("seed") => return Err(Error::Argument("--seed is required".into())),
            None => {}
        }

        let method_name = self.method.to_possible_value().expect("no skipped variants").get_name().to_string();
        let method_typed = typed("method");
        if method_typed || !root.contains_key("method") {
            root.insert("method".into(), json!({ "kind": method_name }));
        }
        let method = object(&mut root, "method")?;
        match method.get("kind").and_then(Value::as_str) {
            Some("ensemble") => put(method, "draws", json!(self.draws), typed("draws")),
            Some("binary_threshold") => put(method, "theta", json!(self.theta), typed("theta")),
            _ => {}
        }

        let scorer_typed = typed("scorer");
        let kind = match self.scorer {
            ScorerArg::Synthetic => "synthetic",
            ScorerArg::Llm => "llm",
        };
        if scorer_typed || !root.contains_key("scorer") {
            root.insert("scorer".into(), json!({ "kind": kind }));
        }
        let scorer = object(&mut root, "scorer")?;
        match scorer.get("kind").and_then(Value::as_str) {
            Some("synthetic") => {
                put(scorer, "concentration", json!(self.concentration), typed("concentration"));
                put(scorer, "corruption", json!(self.corruption), typed("corruption"));
                put(scorer, "temperature", json!(self.temperature), typed("temperature"));
            }
            Some("llm") => {
                if let Some(endpoint) = &self.endpoint {
                    put(scorer, "endpoint", json!(endpoint), true);
                } else if !scorer.contains_key("endpoint") {
                    return Err(Error::Argument("the llm scorer needs --endpoint".into()));
                }
                put(scorer, "model", json!(self.llm_model), typed("llm_model"));
                put(scorer, "timeout_secs", json!(self.timeout_secs), typed("timeout_secs"));
                put(scorer, "retries", json!(self.retries), typed("retries"));
                put(scorer, "max_in_flight", json!(self.max_in_flight), typed("max_in_flight"));
            }
            _ => {}
        }

        let config: ExperimentConfig = serde_json::from_value(Value::Object(root))
            .map_err(|e| Error::Data(format!("invalid experiment config: {e}")))?;
        if config.adjustment == Adjustment::Disabled {
            eprintln!("note: the finite-sample adjustment is disabled; only marginal coverage holds");
        }
        Ok(config)
    }
}

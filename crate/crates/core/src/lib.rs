//! Conformal prediction sets for planners that choose among lettered options
//! and ask a person for help when more than one option survives.
//!
//! The crate is organized bottom-up:
//!
//! - [`betafn`]: regularized incomplete beta function and its inverse.
//! - [`cp`]: split conformal calibration, the finite-sample level adjustment,
//!   and single-step prediction sets.
//! - [`sequence`]: multi-step calibration on the minimum per-step confidence
//!   and causal per-step sets sharing one threshold.
//! - [`scorer`]: confidence sources (a calibrated synthetic scorer and a
//!   completion-endpoint client).
//! - [`scenario`]: task distributions, the simulated helper, and episodes.
//! - [`baselines`]: cumulative-confidence sets, ensembles, binary triggers.
//! - [`harness`]: seeded experiments, sweeps, and result files.

pub mod baselines;
pub mod betafn;
pub mod cp;
pub mod error;
pub mod harness;
pub mod label;
pub mod scenario;
pub mod scorer;
pub mod seed;
pub mod sequence;

#[cfg(any(test, feature = "test-oracles"))]
pub mod oracle;

pub use baselines::{binary_threshold, ensemble_scores, simple_set, Method};
pub use betafn::{beta_cdf, beta_inv_cdf, BetaParams};
pub use cp::{
    adjust_epsilon, calibrate_quantile, fit, needs_help, predict_set, Adjustment, CalibratedModel,
    CalibrationRecord, ModelMode, PredictionSet,
};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, MetricsSummary};
pub use label::{ConfidenceVector, Label, LabelSet};
pub use scenario::{Episode, Outcome, Scenario, Setting};
pub use scorer::{ScorerSpec, SyntheticSpec};
pub use sequence::{fit_sequence, SequenceRecord, TruthTree};

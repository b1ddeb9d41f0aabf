//! Experiment driver: scripted adversaries, Monte-Carlo statistics and the
//! ideal functionality for real-versus-ideal comparisons.
//!
//! Every trial draws from its own seeded streams, so results are identical
//! for any thread count.

mod experiment;
mod fpwke;
mod script;
mod uniformity;

use thiserror::Error;

pub use experiment::{
    compare_real_ideal, ideal_trial, run_experiment, run_experiment_records, run_ideal_experiment, run_trial, ExperimentConfig, ExperimentStats,
    Passwords, RateComparison, RealIdealReport, TrialRecord, HISTOGRAM_BINS,
};
pub use fpwke::{FpwkeQuery, FpwkeResponse, FpwkeState, PwRecord, RecordStatus};
pub use script::{AdversaryScript, ClassicalRule, Mutation, ScriptTamper};
pub use uniformity::{chi_square_uniform, estimate_uniformity, UniformityReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("invalid adversary script: {0}")]
    Script(String),
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error("not expressible against the ideal functionality: {0}")]
    Inexpressible(String),
    #[error("insufficient samples: {0}")]
    Samples(String),
}

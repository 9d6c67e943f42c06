//! Scenario configuration, the stepped engine, experiments and output files.

pub mod config;
pub mod emit;
pub mod engine;
pub mod experiments;
pub mod oracle;

pub use config::{ConfigError, ScenarioConfig};
pub use emit::emit;
pub use engine::{run, SimError, SimResult, StepRecord, Summary};
pub use experiments::{belief_experiment, debt_ceiling_experiment, BeliefTable, CeilingComparison, ExperimentError};

//! Configuration-driven scenario execution: a TOML document describes the
//! contract parameters, the dataset, a cast of actors, and a block-height
//! schedule of actions; the runner replays it against a fresh chain and
//! contract and produces a [`crate::report::RunReport`].

mod config;
mod runner;

pub use config::{
    ActorBehavior, ActorRole, ActorSpec, ContractSection, DatasetSection, GasSection,
    PreparedScenario, ScenarioAction, ScenarioConfig, ScheduleEntry,
};
pub use runner::run_scenario;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unsupported scenario version {got} (this build understands version 1)")]
    Version { got: u32 },
    #[error("config field {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Files(#[from] crate::files::FilesError),
    #[error("contract setup failed: {0}")]
    Contract(#[from] crate::contract::ContractError),
    #[error(transparent)]
    Chain(#[from] crate::chain::ChainError),
    #[error("fund conservation violated at height {height}")]
    ConservationViolated { height: u64 },
}

impl ScenarioError {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

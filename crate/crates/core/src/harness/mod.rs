//! Simulation harness: the world the parties run in, the on-path adversary,
//! and the named scenarios.

pub mod adversary;
pub mod outcome;
pub mod scenarios;
pub mod world;

use thiserror::Error;

pub use adversary::{Action, Adversary, ByteEdit, Hook, Matcher, Observed};
pub use outcome::{Assertion, ScenarioOutcome, SessionReport, Verdict};
pub use scenarios::{find, run_scenario, Scenario, SCENARIOS};
pub use world::{FlowId, ScenarioRun, TxCall, World};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] crate::store::ConfigError),
    #[error("terminal: {0}")]
    Pos(#[from] crate::pos::PosError),
    #[error("handset: {0}")]
    Mobile(#[from] crate::mobile::MobileError),
    #[error("operator: {0}")]
    Mno(#[from] crate::mno::MnoError),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("scenario setup: {0}")]
    Scenario(String),
}

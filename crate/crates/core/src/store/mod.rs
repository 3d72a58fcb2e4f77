//! Persistence: scenario configs in TOML, transcripts as hash-chained JSON
//! lines, and an offline verifier for saved transcripts.

pub mod config;
pub mod transcript;
pub mod verify;

pub use config::{ConfigError, ScenarioConfig, DEMO_CONFIG};
pub use transcript::{parse_jsonl, Record, RecordBody, Transcript};
pub use verify::{verify_transcript, VerifyError, VerifyReport};

//! Scenarios, adversaries, configuration and trace persistence for the
//! `approach-sim` command-line tool.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod config;
pub mod export;
pub mod run;
pub mod scenario;

pub use adversary::{Adversary, AdversaryKind};
pub use config::{Command, Config, ConfigError, Format, RawConfig};
pub use export::{export, import_jsonl, read_jsonl, write_trace};
pub use run::{run_experiment, run_many, RunError};
pub use scenario::{Scenario, SignalSymbols};

//! Campaign orchestration: fuzz through the proxy, label runs against the
//! simulated controller, learn rules, plan the next iteration, repeat.

pub mod campaign;
pub mod compare;
pub mod config;
pub mod holdout;
pub mod persist;
pub mod replay;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use campaign::{learner_params, run_campaign, ActionRecord, CampaignOutcome, RunKind};
pub use compare::compare_modes;
pub use config::{CampaignConfig, Mode, StopSettings};
pub use replay::{failure_rules, generate_corpus, run_corpus, write_corpus, ReplayCase};
pub use report::{CampaignReport, CampaignSummary, ComparisonReport, IterationRecord, ModeResult};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("system under test unavailable: {0}")]
    SutUnavailable(#[from] sdnfuzz_harness::SutError),
    #[error("cannot write {path}: {source}")]
    Persistence {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Learn(#[from] sdnfuzz_core::learner::LearnError),
    #[error(transparent)]
    Plan(#[from] sdnfuzz_core::planner::PlanError),
    #[error(transparent)]
    Codec(#[from] sdnfuzz_core::codec::CodecError),
    #[error(transparent)]
    Proxy(#[from] sdnfuzz_harness::ProxyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

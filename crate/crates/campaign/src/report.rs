use sdnfuzz_core::learner::Metrics;
use sdnfuzz_core::planner::StopReason;
use sdnfuzz_core::Label;
use serde::{Deserialize, Serialize};

use crate::config::CampaignConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    pub samples_added: usize,
    pub dataset_size: usize,
    pub minority: Label,
    pub minority_count: usize,
    pub majority_count: usize,
    pub minority_fraction: f64,
    pub presence_count: usize,
    /// Cross-validated on the dataset so far; absent below ten samples.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub confusion: Option<Metrics>,
    /// Presence labels among this iteration's runs.
    pub failure_count: usize,
    pub guided_runs: usize,
    pub initial_runs: usize,
    pub unsatisfiable_fallbacks: usize,
    pub discarded_runs: usize,
    pub retries: usize,
    pub rule_count: usize,
    pub ruleset_file: String,
    pub plan_file: String,
    /// Whether the plan's unclamped minority target fits in one iteration.
    pub balance_reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub iterations_run: u32,
    pub total_samples: usize,
    pub total_failures: usize,
    pub final_precision: Option<f64>,
    pub final_recall: Option<f64>,
    pub heldout: Option<Metrics>,
    pub heldout_precision: Option<f64>,
    pub heldout_recall: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub final_ruleset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub iterations: Vec<IterationRecord>,
    pub summary: CampaignSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: crate::config::Mode,
    pub total_failures: usize,
    pub total_samples: usize,
    pub final_precision: Option<f64>,
    pub final_recall: Option<f64>,
    pub heldout_precision: Option<f64>,
    pub heldout_recall: Option<f64>,
    pub iterations_run: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub budget_seconds: Option<u64>,
    pub modes: Vec<ModeResult>,
}

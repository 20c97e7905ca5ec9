use std::path::PathBuf;
use std::time::Duration;

use sdnfuzz_core::planner::StopPolicy;
use sdnfuzz_core::{LearnerParams, SchemaRegistry};
use sdnfuzz_harness::OracleConfig;
use serde::{Deserialize, Serialize};

use crate::CampaignError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    /// Learned rules steer fuzzing from the second iteration on.
    Guided,
    /// Random field subsets redrawn within their domains, every iteration.
    Random,
    /// Every field redrawn within its domain, every iteration.
    SchemaRandom,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Guided => "guided",
            Mode::Random => "random",
            Mode::SchemaRandom => "schema_random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopSettings {
    pub plateau: bool,
    pub epsilon: f64,
    pub window: usize,
    pub target: Option<(f64, f64)>,
}

impl Default for StopSettings {
    fn default() -> Self {
        Self {
            plateau: false,
            epsilon: 0.01,
            window: 3,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub message_type: String,
    pub n_per_iteration: usize,
    /// `None` means 1/|F|.
    pub mutation_rate: Option<f64>,
    pub max_iterations: u32,
    pub budget_seconds: Option<u64>,
    pub seed: u64,
    pub oracle: OracleConfig,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub workers: usize,
    pub max_retries: u32,
    pub stop: StopSettings,
    pub learner: LearnerParams,
    /// Size of the oracle-labeled held-out set scored at the end; 0 skips it.
    pub heldout_size: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Guided,
            message_type: "packet_in".into(),
            n_per_iteration: 200,
            mutation_rate: None,
            max_iterations: 20,
            budget_seconds: None,
            seed: 1,
            oracle: OracleConfig::default_planted(),
            output_dir: None,
            workers: 4,
            max_retries: 3,
            stop: StopSettings::default(),
            learner: LearnerParams::default(),
            heldout_size: 5000,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self, registry: &SchemaRegistry) -> Result<(), CampaignError> {
        let bad = |m: String| Err(CampaignError::Config(m));
        if self.n_per_iteration < 10 {
            return bad(format!("n_per_iteration must be at least 10, got {}", self.n_per_iteration));
        }
        if registry.get(&self.message_type).is_none() {
            return bad(format!("unknown message type `{}`", self.message_type));
        }
        if self.oracle.message_type != self.message_type {
            return bad(format!(
                "oracle judges `{}` but the campaign fuzzes `{}`",
                self.oracle.message_type, self.message_type
            ));
        }
        if let Some(mu) = self.mutation_rate {
            if !(0.0..=1.0).contains(&mu) {
                return bad(format!("mutation rate {mu} is not a probability"));
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn mutation_rate_for(&self, field_count: usize) -> f64 {
        self.mutation_rate.unwrap_or(1.0 / field_count.max(1) as f64)
    }

    pub fn stop_policy(&self) -> StopPolicy {
        StopPolicy {
            time_budget: self.budget_seconds.map(Duration::from_secs),
            plateau: self.stop.plateau,
            epsilon: self.stop.epsilon,
            window: self.stop.window,
            target: self.stop.target,
        }
    }
}

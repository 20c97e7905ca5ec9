//! Control-message codec, fuzzing operators, rule learner and planner for
//! ML-guided fuzzing of SDN control channels.
//!
//! Everything here is pure computation over explicit random streams; the
//! network side lives in `sdnfuzz-harness`.

pub mod codec;
pub mod condition;
pub mod exec;
pub mod fuzzer;
pub mod learner;
pub mod planner;
pub mod rng;
pub mod sampler;

pub use codec::{decode, decode_as, encode, ControlMessage, MessageSchema, SchemaRegistry};
pub use condition::{Comparator, Condition};
pub use exec::Execution;
pub use fuzzer::{guided_fuzz, initial_fuzz, FuzzAction, FuzzMode};
pub use learner::{learn, Label, LabeledDataset, LearnerParams, RuleSet};
pub use planner::{plan, BudgetDistribution, IterationPlan};

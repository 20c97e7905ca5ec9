//! Labeled data, rule sets and their induction.

mod dataset;
mod ripper;
mod rules;
mod validate;

use thiserror::Error;

use crate::condition::ConditionError;

pub use dataset::{Label, LabeledDataset, LabeledSample};
pub use ripper::{learn, LearnerParams};
pub use rules::{confidence, BoundRuleSet, DecisionRule, RuleRef, RuleSet};
pub use validate::{cross_validate, evaluate, stratified_folds, Metrics};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("row has {actual} values, expected {expected}")]
    Shape { expected: usize, actual: usize },
    #[error("dataset csv: {0}")]
    Csv(String),
    #[error("bad rule line `{line}`: {reason}")]
    RuleSyntax { line: String, reason: String },
    #[error("cross-validation needs at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error(transparent)]
    Condition(#[from] ConditionError),
}

impl From<csv::Error> for LearnError {
    fn from(e: csv::Error) -> Self {
        LearnError::Csv(e.to_string())
    }
}

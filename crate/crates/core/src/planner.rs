//! Next-iteration class targets, per-rule budgets and stopping decisions.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::learner::{cross_validate, Label, LabeledDataset, LearnError, LearnerParams, Metrics, RuleRef, RuleSet};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("the per-iteration budget n must be at least 1")]
    ZeroBudget,
    #[error("progress needs at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub rule: RuleRef,
    pub quota: u64,
}

/// Remaining fuzzing quota per rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetDistribution {
    pub entries: Vec<BudgetEntry>,
}

impl BudgetDistribution {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.quota).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn quota(&self, rule: RuleRef) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.rule == rule)
            .map(|e| e.quota)
            .sum()
    }

    /// Picks uniformly among entries with quota left.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<RuleRef> {
        let live: Vec<RuleRef> = self
            .entries
            .iter()
            .filter(|e| e.quota > 0)
            .map(|e| e.rule)
            .collect();
        if live.is_empty() {
            None
        } else {
            Some(live[rng.gen_range(0..live.len())])
        }
    }

    /// Takes one unit from `rule`'s entry, removing the entry at zero.
    pub fn consume(&mut self, rule: RuleRef) -> bool {
        let Some(pos) = self.entries.iter().position(|e| e.rule == rule && e.quota > 0) else {
            return false;
        };
        self.entries[pos].quota -= 1;
        if self.entries[pos].quota == 0 {
            self.entries.remove(pos);
        }
        true
    }

    /// Removes `rule`'s entry entirely, returning the quota it held.
    pub fn drop_rule(&mut self, rule: RuleRef) -> u64 {
        let dropped = self.quota(rule);
        self.entries.retain(|e| e.rule != rule);
        dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub dataset_size: u64,
    pub n: u64,
    pub minority: Label,
    pub minor: u64,
    pub major: u64,
    /// `(|D| + n) / 2 - minor` before clamping to `[0, n]`.
    pub raw_minor_target: i64,
    pub minor_target: u64,
    pub major_target: u64,
    pub budget: BudgetDistribution,
    /// No minority rules: the whole iteration uses initial fuzzing.
    pub fallback_initial: bool,
    /// Class groups whose confidences were all zero and got an equal split.
    pub equal_split: Vec<Label>,
}

impl IterationPlan {
    /// Whether the unclamped minority target fits in one iteration.
    pub fn balance_reachable(&self) -> bool {
        self.raw_minor_target <= self.n as i64
    }
}

/// `(minor', major')` for a dataset of `d` samples with `minor` minority
/// samples and `n` new messages.
pub fn class_targets(d: u64, minor: u64, n: u64) -> (u64, u64) {
    let raw = raw_minor_target(d, minor, n);
    let minor_t = raw.clamp(0, n as i64) as u64;
    (minor_t, n - minor_t)
}

fn raw_minor_target(d: u64, minor: u64, n: u64) -> i64 {
    ((d + n) / 2) as i64 - minor as i64
}

/// Splits `total` proportionally to `weights` with largest-remainder
/// rounding. All-zero (or empty-sum) weights split equally; the flag reports
/// that case.
pub fn distribute(total: u64, weights: &[f64]) -> (Vec<u64>, bool) {
    if weights.is_empty() {
        return (Vec::new(), false);
    }
    let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let equal = sum <= 0.0;
    let shares: Vec<f64> = weights
        .iter()
        .map(|&w| {
            if equal {
                total as f64 / weights.len() as f64
            } else {
                total as f64 * w.max(0.0) / sum
            }
        })
        .collect();
    let mut quotas: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    let assigned: u64 = quotas.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        quotas[i] += 1;
    }
    (quotas, equal)
}

pub fn plan(data: &LabeledDataset, rules: &RuleSet, n: u64) -> Result<IterationPlan, PlanError> {
    if n == 0 {
        return Err(PlanError::ZeroBudget);
    }
    let minority = rules.minority_class();
    let d = data.len() as u64;
    let minor = data.count(minority) as u64;
    let major = d - minor;
    let (minor_target, major_target) = class_targets(d, minor, n);
    let mut plan = IterationPlan {
        dataset_size: d,
        n,
        minority,
        minor,
        major,
        raw_minor_target: raw_minor_target(d, minor, n),
        minor_target,
        major_target,
        budget: BudgetDistribution::default(),
        fallback_initial: !rules.has_minority_rules(),
        equal_split: Vec::new(),
    };
    if plan.fallback_initial {
        return Ok(plan);
    }
    let weights: Vec<f64> = rules.minority_rules.iter().map(|r| r.confidence()).collect();
    let (quotas, equal) = distribute(minor_target, &weights);
    if equal {
        tracing::warn!(group = %minority, "all minority rule confidences are zero; splitting equally");
        plan.equal_split.push(minority);
    }
    let (major_quota, equal) = distribute(major_target, &[rules.default_rule.confidence()]);
    if equal && major_target > 0 {
        tracing::warn!(group = %minority.other(), "default rule confidence is zero; splitting equally");
        plan.equal_split.push(minority.other());
    }
    for (i, q) in quotas.into_iter().enumerate() {
        if q > 0 {
            plan.budget.entries.push(BudgetEntry {
                rule: RuleRef::Minority(i),
                quota: q,
            });
        }
    }
    if major_quota[0] > 0 {
        plan.budget.entries.push(BudgetEntry {
            rule: RuleRef::Default,
            quota: major_quota[0],
        });
    }
    Ok(plan)
}

pub const PROGRESS_FOLDS: usize = 10;

/// Precision and recall by 10-fold cross-validation.
pub fn progress(data: &LabeledDataset, params: &LearnerParams, exec: Execution) -> Result<Metrics, PlanError> {
    if data.len() < PROGRESS_FOLDS {
        return Err(PlanError::TooFewSamples {
            needed: PROGRESS_FOLDS,
            actual: data.len(),
        });
    }
    Ok(cross_validate(data, PROGRESS_FOLDS, params, exec)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BudgetExhausted,
    Plateau,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub time_budget: Option<Duration>,
    pub plateau: bool,
    pub epsilon: f64,
    pub window: usize,
    /// `(precision, recall)` that ends the campaign once both are reached.
    pub target: Option<(f64, f64)>,
}

impl Default for StopPolicy {
    fn default() -> Self {
        Self {
            time_budget: None,
            plateau: true,
            epsilon: 0.01,
            window: 3,
            target: None,
        }
    }
}

/// `history` holds `(precision, recall)` per iteration, oldest first.
pub fn should_stop(history: &[(f64, f64)], elapsed: Duration, policy: &StopPolicy) -> Option<StopReason> {
    if policy.time_budget.is_some_and(|b| elapsed >= b) {
        return Some(StopReason::BudgetExhausted);
    }
    if let (Some((tp, tr)), Some(&(p, r))) = (policy.target, history.last()) {
        if p >= tp && r >= tr {
            return Some(StopReason::TargetReached);
        }
    }
    let w = policy.window.max(1);
    if policy.plateau && history.len() >= w {
        let first = history[history.len() - w];
        let last = history[history.len() - 1];
        if last.0 - first.0 < policy.epsilon && last.1 - first.1 < policy.epsilon {
            return Some(StopReason::Plateau);
        }
    }
    None
}

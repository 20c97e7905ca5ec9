//! Random and rule-guided message fuzzing.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::ControlMessage;
use crate::condition::Condition;
use crate::learner::{DecisionRule, RuleRef, RuleSet};
use crate::planner::BudgetDistribution;
use crate::sampler::{solve, solve_complement, SampleError};

/// Rejection attempts when solving the default rule's negated conditions.
pub const COMPLEMENT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("mutation rate {0} is not a probability")]
    BadMutationRate(f64),
    #[error("budget is empty")]
    EmptyBudget,
    #[error("rule {rule} cannot be satisfied: {source}")]
    UnsatisfiableRule {
        rule: RuleRef,
        #[source]
        source: SampleError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzMode {
    Initial,
    Guided,
    SchemaRandom,
}

/// What one fuzzing step did to a message.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzAction {
    pub mode: FuzzMode,
    pub applied_rule: Option<RuleRef>,
    pub rule: Option<DecisionRule>,
    /// Text of the condition that was solved; for the default rule this is
    /// the list of minority conditions that were avoided.
    pub rule_text: Option<String>,
    pub replaced_fields: BTreeSet<String>,
    pub mutated_fields: BTreeSet<String>,
    pub before: ControlMessage,
    pub after: ControlMessage,
}

fn redraw_in_domain<R: Rng + ?Sized>(msg: &mut ControlMessage, indices: &[usize], rng: &mut R) {
    let schema = msg.schema().clone();
    for &i in indices {
        let (lo, hi) = schema.fields()[i].domain;
        msg.set_index(i, rng.gen_range(lo..=hi))
            .expect("domain fits the field width");
    }
}

/// Replaces a random nonempty subset of fields with values drawn uniformly
/// from each field's domain. Each field joins the subset with probability
/// one half; an empty draw is redone.
pub fn initial_fuzz<R: Rng + ?Sized>(msg: &ControlMessage, rng: &mut R) -> FuzzAction {
    let count = msg.schema().field_count();
    let subset = loop {
        let pick: Vec<usize> = (0..count).filter(|_| rng.gen_bool(0.5)).collect();
        if !pick.is_empty() || count == 0 {
            break pick;
        }
    };
    let mut after = msg.clone();
    redraw_in_domain(&mut after, &subset, rng);
    FuzzAction {
        mode: FuzzMode::Initial,
        applied_rule: None,
        rule: None,
        rule_text: None,
        replaced_fields: subset
            .iter()
            .map(|&i| msg.schema().fields()[i].name.clone())
            .collect(),
        mutated_fields: BTreeSet::new(),
        before: msg.clone(),
        after,
    }
}

/// Redraws every field from its domain.
pub fn schema_random_fuzz<R: Rng + ?Sized>(msg: &ControlMessage, rng: &mut R) -> FuzzAction {
    let all: Vec<usize> = (0..msg.schema().field_count()).collect();
    let mut after = msg.clone();
    redraw_in_domain(&mut after, &all, rng);
    FuzzAction {
        mode: FuzzMode::SchemaRandom,
        applied_rule: None,
        rule: None,
        rule_text: None,
        replaced_fields: msg.schema().field_names().into_iter().collect(),
        mutated_fields: BTreeSet::new(),
        before: msg.clone(),
        after,
    }
}

fn check_mu(mu: f64) -> Result<(), FuzzError> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(FuzzError::BadMutationRate(mu))
    }
}

/// Sets the fields of `rule`'s condition to a satisfying assignment, then
/// mutates every other field with probability `mu` to a uniform raw value.
///
/// The default rule is satisfied by avoiding every minority condition.
pub fn fuzz_with_rule<R: Rng + ?Sized>(
    msg: &ControlMessage,
    rules: &RuleSet,
    rule: RuleRef,
    mu: f64,
    rng: &mut R,
) -> Result<FuzzAction, FuzzError> {
    check_mu(mu)?;
    let schema = msg.schema().clone();
    let unsat = |source| FuzzError::UnsatisfiableRule { rule, source };
    let (assignment, text): (BTreeMap<String, u64>, String) = match rule {
        RuleRef::Minority(i) => {
            let cond = &rules.minority_rules[i].condition;
            (solve(cond, &schema, rng).map_err(unsat)?, cond.to_string())
        }
        RuleRef::Default => {
            let conds: Vec<Condition> = rules.minority_conditions();
            let text = conds
                .iter()
                .map(|c| format!("NOT ({c})"))
                .collect::<Vec<_>>()
                .join(" AND ");
            let a = solve_complement(&conds, &schema, rng, COMPLEMENT_ATTEMPTS).map_err(unsat)?;
            (a, if text.is_empty() { "TRUE".into() } else { text })
        }
    };
    let mut after = msg.clone();
    for (field, &value) in &assignment {
        after.set(field, value).expect("sampler stays within the raw width");
    }
    let mut mutated = BTreeSet::new();
    for (i, spec) in schema.fields().iter().enumerate() {
        if assignment.contains_key(&spec.name) {
            continue;
        }
        if rng.gen_bool(mu) {
            after
                .set_index(i, rng.gen_range(0..=spec.raw_max()))
                .expect("raw range fits");
            mutated.insert(spec.name.clone());
        }
    }
    Ok(FuzzAction {
        mode: FuzzMode::Guided,
        applied_rule: Some(rule),
        rule: Some(rules.rule(rule).clone()),
        rule_text: Some(text),
        replaced_fields: assignment.into_keys().collect(),
        mutated_fields: mutated,
        before: msg.clone(),
        after,
    })
}

/// Draws a rule from `budget`, consumes one unit of its quota and fuzzes
/// `msg` with it. An unsatisfiable rule loses its whole entry.
pub fn guided_fuzz<R: Rng + ?Sized>(
    msg: &ControlMessage,
    budget: &mut BudgetDistribution,
    rules: &RuleSet,
    mu: f64,
    rng: &mut R,
) -> Result<FuzzAction, FuzzError> {
    check_mu(mu)?;
    let rule = budget.draw(rng).ok_or(FuzzError::EmptyBudget)?;
    match fuzz_with_rule(msg, rules, rule, mu, rng) {
        Ok(action) => {
            budget.consume(rule);
            Ok(action)
        }
        Err(e) => {
            let dropped = budget.drop_rule(rule);
            tracing::warn!(%rule, dropped, error = %e, "dropping unsatisfiable rule from budget");
            Err(e)
        }
    }
}

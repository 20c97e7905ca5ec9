//! Concrete field assignments for rule conditions.
//!
//! Conditions are conjunctions of per-field comparisons, so each field's
//! satisfying set is a union of disjoint intervals inside its raw range.
//! Solving intersects those sets and draws uniformly from each one.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::codec::MessageSchema;
use crate::condition::{Atom, Comparator, Condition, ConditionError, FieldSource};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("condition `{condition}` is unsatisfiable: field `{field}` has no allowed value")]
    Unsatisfiable { condition: String, field: String },
    #[error("condition references `{0}`, which is not a schema field")]
    UnknownField(String),
    #[error("no assignment avoiding {rules} rule(s) found in {attempts} attempts")]
    ComplementNotFound { rules: usize, attempts: usize },
}

/// Sorted, disjoint, inclusive intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    ranges: Vec<(u64, u64)>,
}

impl IntervalSet {
    pub fn full(max: u64) -> Self {
        Self {
            ranges: vec![(0, max)],
        }
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, v: u64) -> bool {
        self.ranges.iter().any(|&(lo, hi)| lo <= v && v <= hi)
    }

    /// Number of values in the set; u128 since a full 64-bit range has 2^64.
    pub fn size(&self) -> u128 {
        self.ranges
            .iter()
            .map(|&(lo, hi)| u128::from(hi - lo) + 1)
            .sum()
    }

    fn clip(&mut self, lo: u64, hi: u64) {
        self.ranges = self
            .ranges
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (a <= b).then_some((a, b))
            })
            .collect();
    }

    fn remove(&mut self, v: u64) {
        let mut out = Vec::with_capacity(self.ranges.len() + 1);
        for &(a, b) in &self.ranges {
            if v < a || v > b {
                out.push((a, b));
                continue;
            }
            if a < v {
                out.push((a, v - 1));
            }
            if v < b {
                out.push((v + 1, b));
            }
        }
        self.ranges = out;
    }

    fn clear(&mut self) {
        self.ranges.clear();
    }

    pub fn apply(&mut self, op: Comparator, c: u64) {
        match op {
            Comparator::Eq => self.clip(c, c),
            Comparator::Ne => self.remove(c),
            Comparator::Le => self.clip(0, c),
            Comparator::Ge => self.clip(c, u64::MAX),
            Comparator::Lt => match c.checked_sub(1) {
                Some(hi) => self.clip(0, hi),
                None => self.clear(),
            },
            Comparator::Gt => match c.checked_add(1) {
                Some(lo) => self.clip(lo, u64::MAX),
                None => self.clear(),
            },
        }
    }

    /// Uniform draw; `None` when empty.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        let total = self.size();
        if total == 0 {
            return None;
        }
        let mut k = rng.gen_range(0..total);
        for &(lo, hi) in &self.ranges {
            let len = u128::from(hi - lo) + 1;
            if k < len {
                return Some(lo + k as u64);
            }
            k -= len;
        }
        unreachable!("index within total size")
    }
}

/// The allowed values of one field under a condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldInterval {
    pub field: String,
    pub allowed: IntervalSet,
}

/// Per-field allowed sets for every field the condition mentions, in order of
/// first mention.
pub fn field_intervals(
    cond: &Condition,
    schema: &MessageSchema,
) -> Result<Vec<FieldInterval>, SampleError> {
    let mut out: Vec<FieldInterval> = Vec::new();
    for atom in cond.atoms() {
        let spec = schema
            .field(&atom.field)
            .ok_or_else(|| SampleError::UnknownField(atom.field.clone()))?;
        let slot = match out.iter().position(|fi| fi.field == atom.field) {
            Some(i) => i,
            None => {
                out.push(FieldInterval {
                    field: atom.field.clone(),
                    allowed: IntervalSet::full(spec.raw_max()),
                });
                out.len() - 1
            }
        };
        out[slot].allowed.apply(atom.op, atom.value);
    }
    Ok(out)
}

pub fn is_satisfiable(cond: &Condition, schema: &MessageSchema) -> Result<bool, SampleError> {
    Ok(field_intervals(cond, schema)?
        .iter()
        .all(|fi| !fi.allowed.is_empty()))
}

/// Draws an assignment for the fields `cond` mentions, uniform over each
/// field's allowed set (raw width, not the declared domain).
pub fn solve<R: Rng + ?Sized>(
    cond: &Condition,
    schema: &MessageSchema,
    rng: &mut R,
) -> Result<BTreeMap<String, u64>, SampleError> {
    let intervals = field_intervals(cond, schema)?;
    if let Some(empty) = intervals.iter().find(|fi| fi.allowed.is_empty()) {
        return Err(SampleError::Unsatisfiable {
            condition: cond.to_string(),
            field: empty.field.clone(),
        });
    }
    Ok(intervals
        .into_iter()
        .map(|fi| {
            let v = fi.allowed.sample(rng).expect("non-empty set");
            (fi.field, v)
        })
        .collect())
}

/// Draws an assignment to the union of fields mentioned by `conds` such that
/// none of them holds. Tries rejection over the raw field ranges first, then
/// searches for one negated atom per condition whose conjunction is
/// satisfiable. Fails only if the complement is empty.
pub fn solve_complement<R: Rng + ?Sized>(
    conds: &[Condition],
    schema: &MessageSchema,
    rng: &mut R,
    max_attempts: usize,
) -> Result<BTreeMap<String, u64>, SampleError> {
    let mut fields: Vec<(&str, u64)> = Vec::new();
    for cond in conds {
        for name in cond.fields() {
            if fields.iter().any(|(n, _)| *n == name) {
                continue;
            }
            let spec = schema
                .field(name)
                .ok_or_else(|| SampleError::UnknownField(name.to_string()))?;
            fields.push((name, spec.raw_max()));
        }
    }
    let mut candidate: Vec<(&str, u64)> = fields.iter().map(|&(n, _)| (n, 0)).collect();
    for _ in 0..max_attempts {
        for (slot, &(_, max)) in candidate.iter_mut().zip(&fields) {
            slot.1 = rng.gen_range(0..=max);
        }
        let fires = conds
            .iter()
            .any(|c| c.evaluate(&candidate[..]).expect("all fields assigned"));
        if !fires {
            return Ok(candidate
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect());
        }
    }
    let mut chosen = Condition::always();
    let mut budget = COMPLEMENT_SEARCH_NODES;
    if negation_search(conds, schema, rng, &mut chosen, &mut budget)? {
        let fixed = solve(&chosen, schema, rng)?;
        return Ok(fields
            .iter()
            .map(|&(n, max)| {
                let v = fixed.get(n).copied().unwrap_or_else(|| rng.gen_range(0..=max));
                (n.to_string(), v)
            })
            .collect());
    }
    Err(SampleError::ComplementNotFound {
        rules: conds.len(),
        attempts: max_attempts,
    })
}

const COMPLEMENT_SEARCH_NODES: usize = 100_000;

fn negation_search<R: Rng + ?Sized>(
    conds: &[Condition],
    schema: &MessageSchema,
    rng: &mut R,
    chosen: &mut Condition,
    budget: &mut usize,
) -> Result<bool, SampleError> {
    let Some((first, rest)) = conds.split_first() else {
        return Ok(true);
    };
    let mut atoms: Vec<&Atom> = first.atoms().iter().collect();
    atoms.shuffle(rng);
    for atom in atoms {
        if *budget == 0 {
            return Ok(false);
        }
        *budget -= 1;
        chosen.push(Atom::new(atom.field.clone(), atom.op.negate(), atom.value));
        if is_satisfiable(chosen, schema)? && negation_search(rest, schema, rng, chosen, budget)? {
            return Ok(true);
        }
        chosen.pop();
    }
    Ok(false)
}

pub fn evaluate<S: FieldSource + ?Sized>(
    cond: &Condition,
    values: &S,
) -> Result<bool, ConditionError> {
    cond.evaluate(values)
}

//! Conjunctive conditions over integer message fields.
//!
//! Text syntax: `version > 5 AND length >= 10`. The empty conjunction prints
//! as `TRUE`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditionError {
    #[error("missing value for field `{0}`")]
    MissingField(String),
    #[error("cannot parse condition `{text}`: {reason}")]
    Parse { text: String, reason: String },
}

/// Anything that can look up a field value by name.
pub trait FieldSource {
    fn field_value(&self, name: &str) -> Option<u64>;
}

impl FieldSource for HashMap<String, u64> {
    fn field_value(&self, name: &str) -> Option<u64> {
        self.get(name).copied()
    }
}

impl FieldSource for BTreeMap<String, u64> {
    fn field_value(&self, name: &str) -> Option<u64> {
        self.get(name).copied()
    }
}

impl FieldSource for [(&str, u64)] {
    fn field_value(&self, name: &str) -> Option<u64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    Eq,
    Ne,
    Le,
    Ge,
    Lt,
    Gt,
}

impl Comparator {
    pub const ALL: [Comparator; 6] = [
        Comparator::Eq,
        Comparator::Ne,
        Comparator::Le,
        Comparator::Ge,
        Comparator::Lt,
        Comparator::Gt,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Lt => "<",
            Comparator::Gt => ">",
        }
    }

    /// The comparator that holds exactly when `self` does not.
    pub fn negate(self) -> Comparator {
        match self {
            Comparator::Eq => Comparator::Ne,
            Comparator::Ne => Comparator::Eq,
            Comparator::Le => Comparator::Gt,
            Comparator::Ge => Comparator::Lt,
            Comparator::Lt => Comparator::Ge,
            Comparator::Gt => Comparator::Le,
        }
    }

    #[inline]
    pub fn holds(self, value: u64, constant: u64) -> bool {
        match self {
            Comparator::Eq => value == constant,
            Comparator::Ne => value != constant,
            Comparator::Le => value <= constant,
            Comparator::Ge => value >= constant,
            Comparator::Lt => value < constant,
            Comparator::Gt => value > constant,
        }
    }
}

impl FromStr for Comparator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "=" | "==" => Comparator::Eq,
            "!=" | "≠" => Comparator::Ne,
            "<=" | "≤" => Comparator::Le,
            ">=" | "≥" => Comparator::Ge,
            "<" => Comparator::Lt,
            ">" => Comparator::Gt,
            other => return Err(format!("unknown comparator `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub field: String,
    pub op: Comparator,
    pub value: u64,
}

impl Atom {
    pub fn new(field: impl Into<String>, op: Comparator, value: u64) -> Self {
        Self {
            field: field.into(),
            op,
            value,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.field, self.op.symbol(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Condition {
    atoms: Vec<Atom>,
}

impl Condition {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn always() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn push(&mut self, atom: Atom) {
        self.atoms.push(atom);
    }

    pub fn pop(&mut self) -> Option<Atom> {
        self.atoms.pop()
    }

    pub fn and(mut self, field: impl Into<String>, op: Comparator, value: u64) -> Self {
        self.atoms.push(Atom::new(field, op, value));
        self
    }

    /// Distinct field names, in order of first appearance.
    pub fn fields(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for a in &self.atoms {
            if !out.contains(&a.field.as_str()) {
                out.push(&a.field);
            }
        }
        out
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.atoms.iter().any(|a| a.field == field)
    }

    pub fn evaluate<S: FieldSource + ?Sized>(&self, values: &S) -> Result<bool, ConditionError> {
        let mut all = true;
        for atom in &self.atoms {
            let v = values
                .field_value(&atom.field)
                .ok_or_else(|| ConditionError::MissingField(atom.field.clone()))?;
            all &= atom.op.holds(v, atom.value);
        }
        Ok(all)
    }

    /// Resolves field names against an ordered field list.
    pub fn bind(&self, fields: &[String]) -> Result<BoundCondition, ConditionError> {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                fields
                    .iter()
                    .position(|f| *f == a.field)
                    .map(|i| (i, a.op, a.value))
                    .ok_or_else(|| ConditionError::MissingField(a.field.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(BoundCondition { atoms })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("TRUE");
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{atom}")?;
        }
        Ok(())
    }
}

impl FromStr for Condition {
    type Err = ConditionError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let fail = |reason: String| ConditionError::Parse {
            text: text.to_string(),
            reason,
        };
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(fail("empty condition".into()));
        }
        if trimmed == "TRUE" {
            return Ok(Condition::always());
        }
        let mut atoms = Vec::new();
        for part in trimmed.split(" AND ") {
            let tokens: Vec<&str> = part.split_whitespace().collect();
            let [field, op, value] = tokens.as_slice() else {
                return Err(fail(format!("expected `<field> <op> <const>`, got `{part}`")));
            };
            if !field.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(fail(format!("bad field name `{field}`")));
            }
            let op = op.parse::<Comparator>().map_err(fail)?;
            let value = value
                .parse::<u64>()
                .map_err(|e| fail(format!("bad constant `{value}`: {e}")))?;
            atoms.push(Atom::new(*field, op, value));
        }
        Ok(Condition::new(atoms))
    }
}

/// A condition whose fields are resolved to column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundCondition {
    atoms: Vec<(usize, Comparator, u64)>,
}

impl BoundCondition {
    #[inline]
    pub fn matches(&self, row: &[u64]) -> bool {
        self.atoms.iter().all(|&(i, op, v)| op.holds(row[i], v))
    }

    pub fn atoms(&self) -> &[(usize, Comparator, u64)] {
        &self.atoms
    }
}

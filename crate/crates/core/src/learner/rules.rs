use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::{Label, LabeledDataset};
use super::LearnError;
use crate::condition::{BoundCondition, Condition, ConditionError, FieldSource};

/// IF-condition-THEN-class statement with its coverage on the training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub condition: Condition,
    pub prediction: Label,
    /// Samples whose values satisfy the condition.
    pub t: u64,
    /// Of those, samples labeled differently from `prediction`.
    pub f: u64,
}

impl DecisionRule {
    pub fn new(condition: Condition, prediction: Label) -> Self {
        Self {
            condition,
            prediction,
            t: 0,
            f: 0,
        }
    }

    /// `(t - f) / t`, or 0 for a rule that matches nothing.
    pub fn confidence(&self) -> f64 {
        confidence(self.t, self.f)
    }
}

pub fn confidence(t: u64, f: u64) -> f64 {
    if t == 0 {
        0.0
    } else {
        (t - f) as f64 / t as f64
    }
}

/// Ordered minority-class rules plus a default rule for the majority class.
///
/// The default rule fires exactly when no minority rule does; its own
/// `condition` is left empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub minority_rules: Vec<DecisionRule>,
    pub default_rule: DecisionRule,
}

/// Which rule of a [`RuleSet`] something refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleRef {
    Minority(usize),
    Default,
}

impl fmt::Display for RuleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleRef::Minority(i) => write!(f, "r{}", i + 1),
            RuleRef::Default => f.write_str("default"),
        }
    }
}

impl RuleSet {
    /// A rule set with no minority rules.
    pub fn default_only(majority: Label) -> Self {
        Self {
            minority_rules: Vec::new(),
            default_rule: DecisionRule::new(Condition::always(), majority),
        }
    }

    pub fn minority_class(&self) -> Label {
        self.default_rule.prediction.other()
    }

    pub fn majority_class(&self) -> Label {
        self.default_rule.prediction
    }

    pub fn has_minority_rules(&self) -> bool {
        !self.minority_rules.is_empty()
    }

    pub fn rule(&self, r: RuleRef) -> &DecisionRule {
        match r {
            RuleRef::Minority(i) => &self.minority_rules[i],
            RuleRef::Default => &self.default_rule,
        }
    }

    pub fn minority_conditions(&self) -> Vec<Condition> {
        self.minority_rules.iter().map(|r| r.condition.clone()).collect()
    }

    /// Index of the first minority rule that fires, if any.
    pub fn firing_rule<S: FieldSource + ?Sized>(&self, values: &S) -> Result<Option<usize>, ConditionError> {
        for (i, rule) in self.minority_rules.iter().enumerate() {
            if rule.condition.evaluate(values)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn classify<S: FieldSource + ?Sized>(&self, values: &S) -> Result<Label, ConditionError> {
        Ok(match self.firing_rule(values)? {
            Some(i) => self.minority_rules[i].prediction,
            None => self.default_rule.prediction,
        })
    }

    pub fn bind(&self, fields: &[String]) -> Result<BoundRuleSet, ConditionError> {
        Ok(BoundRuleSet {
            rules: self
                .minority_rules
                .iter()
                .map(|r| r.condition.bind(fields))
                .collect::<Result<_, _>>()?,
            minority: self.minority_class(),
        })
    }

    /// Recomputes every rule's `t` and `f` over `data`.
    pub fn annotate(&mut self, data: &LabeledDataset) -> Result<(), LearnError> {
        let bound = self.bind(data.fields())?;
        let minority = self.minority_class();
        for (rule, cond) in self.minority_rules.iter_mut().zip(&bound.rules) {
            let (mut t, mut f) = (0u64, 0u64);
            for (row, &label) in data.rows().iter().zip(data.labels()) {
                if cond.matches(row) {
                    t += 1;
                    f += u64::from(label != minority);
                }
            }
            rule.t = t;
            rule.f = f;
        }
        let (mut t, mut f) = (0u64, 0u64);
        for (row, &label) in data.rows().iter().zip(data.labels()) {
            if !bound.fires(row) {
                t += 1;
                f += u64::from(label != self.default_rule.prediction);
            }
        }
        self.default_rule.t = t;
        self.default_rule.f = f;
        Ok(())
    }
}

/// A rule set resolved against a field order, for fast row classification.
#[derive(Debug, Clone)]
pub struct BoundRuleSet {
    rules: Vec<BoundCondition>,
    minority: Label,
}

impl BoundRuleSet {
    #[inline]
    pub fn fires(&self, row: &[u64]) -> bool {
        self.rules.iter().any(|r| r.matches(row))
    }

    #[inline]
    pub fn classify(&self, row: &[u64]) -> Label {
        if self.fires(row) {
            self.minority
        } else {
            self.minority.other()
        }
    }
}

fn stats_suffix(rule: &DecisionRule) -> String {
    format!(
        "(t={}, f={}, confidence={:.6})",
        rule.t,
        rule.f,
        rule.confidence()
    )
}

impl fmt::Display for RuleSet {
    /// One `IF … THEN class=… (t=…, f=…, confidence=…)` line per minority
    /// rule, then `ELSE class=… (…)` for the default rule.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rule in &self.minority_rules {
            writeln!(
                f,
                "IF {} THEN class={} {}",
                rule.condition,
                rule.prediction,
                stats_suffix(rule)
            )?;
        }
        writeln!(
            f,
            "ELSE class={} {}",
            self.default_rule.prediction,
            stats_suffix(&self.default_rule)
        )
    }
}

fn parse_stats(text: &str, line: &str) -> Result<(u64, u64), LearnError> {
    let bad = |why: &str| LearnError::RuleSyntax {
        line: line.to_string(),
        reason: why.to_string(),
    };
    let inner = text
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| bad("statistics must be `(t=…, f=…, confidence=…)`"))?;
    let parts: Vec<&str> = inner.split(", ").collect();
    let [t, f, c] = parts.as_slice() else {
        return Err(bad("expected three statistics"));
    };
    let num = |s: &str, key: &str| -> Result<String, LearnError> {
        s.strip_prefix(key)
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected `{key}…`")))
    };
    let t: u64 = num(t, "t=")?.parse().map_err(|_| bad("bad t"))?;
    let f: u64 = num(f, "f=")?.parse().map_err(|_| bad("bad f"))?;
    let c: f64 = num(c, "confidence=")?.parse().map_err(|_| bad("bad confidence"))?;
    if f > t {
        return Err(bad("f exceeds t"));
    }
    if (c - confidence(t, f)).abs() > 5e-7 {
        return Err(bad("confidence does not match (t - f) / t"));
    }
    Ok((t, f))
}

impl FromStr for RuleSet {
    type Err = LearnError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut minority_rules = Vec::new();
        let mut default_rule = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let bad = |why: &str| LearnError::RuleSyntax {
                line: line.to_string(),
                reason: why.to_string(),
            };
            if default_rule.is_some() {
                return Err(bad("rules after the ELSE line"));
            }
            if let Some(rest) = line.strip_prefix("ELSE class=") {
                let (class, stats) = match rest.split_once(' ') {
                    Some((c, s)) => (c, Some(s)),
                    None => (rest, None),
                };
                let prediction: Label = class.parse().map_err(|e: String| bad(&e))?;
                let mut rule = DecisionRule::new(Condition::always(), prediction);
                if let Some(stats) = stats {
                    (rule.t, rule.f) = parse_stats(stats, line)?;
                }
                default_rule = Some(rule);
                continue;
            }
            let body = line.strip_prefix("IF ").ok_or_else(|| bad("expected `IF` or `ELSE`"))?;
            let (cond, rest) = body
                .split_once(" THEN class=")
                .ok_or_else(|| bad("missing `THEN class=`"))?;
            let (class, stats) = rest.split_once(' ').ok_or_else(|| bad("missing statistics"))?;
            let condition: Condition = cond.parse()?;
            if condition.is_empty() {
                return Err(bad("minority rules need at least one atom"));
            }
            let prediction: Label = class.parse().map_err(|e: String| bad(&e))?;
            let (t, f) = parse_stats(stats, line)?;
            minority_rules.push(DecisionRule {
                condition,
                prediction,
                t,
                f,
            });
        }
        let default_rule = default_rule.ok_or_else(|| LearnError::RuleSyntax {
            line: String::new(),
            reason: "missing ELSE line".into(),
        })?;
        if let Some(r) = minority_rules
            .iter()
            .find(|r: &&DecisionRule| r.prediction == default_rule.prediction)
        {
            return Err(LearnError::RuleSyntax {
                line: r.condition.to_string(),
                reason: "minority rules must predict the class opposite the default".into(),
            });
        }
        Ok(RuleSet {
            minority_rules,
            default_rule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::Comparator;

    #[test]
    fn confidence_of_worked_example() {
        let mut rule = DecisionRule::new(Condition::always(), Label::Presence);
        rule.t = 88;
        rule.f = 7;
        assert_eq!(rule.confidence(), 81.0 / 88.0);
        assert!(((rule.confidence() * 100.0).round() / 100.0 - 0.92).abs() < 1e-12);
    }

    #[test]
    fn confidence_bounds() {
        assert_eq!(confidence(0, 0), 0.0);
        assert_eq!(confidence(5, 0), 1.0);
        assert_eq!(confidence(5, 5), 0.0);
    }

    fn sample_set() -> RuleSet {
        RuleSet {
            minority_rules: vec![
                DecisionRule {
                    condition: Condition::always().and("version", Comparator::Gt, 5),
                    prediction: Label::Presence,
                    t: 88,
                    f: 7,
                },
                DecisionRule {
                    condition: Condition::always()
                        .and("reason", Comparator::Ge, 12)
                        .and("eth_type", Comparator::Eq, 2048),
                    prediction: Label::Presence,
                    t: 10,
                    f: 3,
                },
                DecisionRule {
                    condition: Condition::always().and("length", Comparator::Le, 9),
                    prediction: Label::Presence,
                    t: 4,
                    f: 0,
                },
            ],
            default_rule: DecisionRule {
                condition: Condition::always(),
                prediction: Label::Absence,
                t: 190,
                f: 10,
            },
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let text = sample_set().to_string();
        assert_eq!(
            text.lines().next().unwrap(),
            "IF version > 5 THEN class=presence (t=88, f=7, confidence=0.920455)"
        );
        assert!(text.ends_with("ELSE class=absence (t=190, f=10, confidence=0.947368)\n"));
        let parsed: RuleSet = text.parse().unwrap();
        assert_eq!(parsed, sample_set());
        assert_eq!(parsed.to_string(), text);
    }

    #[test]
    fn bare_else_line_is_accepted() {
        let rs: RuleSet = "ELSE class=absence".parse().unwrap();
        assert_eq!(rs.majority_class(), Label::Absence);
        assert!(!rs.has_minority_rules());
    }

    #[test]
    fn rejects_inconsistent_text() {
        for text in [
            "IF a > 1 THEN class=presence (t=2, f=0, confidence=0.5)\nELSE class=absence",
            "IF a > 1 THEN class=absence (t=2, f=0, confidence=1.000000)\nELSE class=absence",
            "IF a > 1 THEN class=presence (t=2, f=0, confidence=1.000000)",
            "ELSE class=absence\nIF a > 1 THEN class=presence (t=2, f=0, confidence=1.000000)",
            "IF a > 1 THEN class=presence (t=2, f=3, confidence=1.000000)\nELSE class=absence",
        ] {
            assert!(text.parse::<RuleSet>().is_err(), "{text}");
        }
    }

    #[test]
    fn first_match_and_default() {
        let rs = sample_set();
        let none = [("version", 1u64), ("reason", 0), ("eth_type", 0), ("length", 50)];
        assert_eq!(rs.classify(&none[..]).unwrap(), Label::Absence);
        assert_eq!(rs.firing_rule(&none[..]).unwrap(), None);
        let both = [("version", 6u64), ("reason", 0), ("eth_type", 0), ("length", 3)];
        assert_eq!(rs.firing_rule(&both[..]).unwrap(), Some(0));
        assert_eq!(rs.classify(&both[..]).unwrap(), Label::Presence);
        let missing = [("version", 1u64)];
        assert!(matches!(rs.classify(&missing[..]), Err(ConditionError::MissingField(_))));
    }
}

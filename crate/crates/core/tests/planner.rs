use proptest::prelude::*;
use sdnfuzz_core::condition::Condition;
use sdnfuzz_core::learner::{DecisionRule, Label, LabeledDataset, RuleRef, RuleSet};
use sdnfuzz_core::planner::{class_targets, distribute, plan};

fn dataset(minor: u64, major: u64) -> LabeledDataset {
    let mut ds = LabeledDataset::new(vec!["a".into()]);
    for i in 0..minor + major {
        let l = if i < minor { Label::Presence } else { Label::Absence };
        ds.push(vec![i], l, 1).unwrap();
    }
    ds
}

fn rule(t: u64, f: u64, prediction: Label) -> DecisionRule {
    DecisionRule {
        condition: "a >= 1".parse::<Condition>().unwrap(),
        prediction,
        t,
        f,
    }
}

#[test]
fn table_sequence_reproduces() {
    let rows = [
        (200, 10, 190, 190, 10),
        (400, 125, 275, 175, 25),
        (600, 248, 352, 152, 48),
        (800, 380, 420, 120, 80),
        (1000, 495, 505, 105, 95),
        (1200, 600, 600, 100, 100),
    ];
    for (d, minor, major, mt, jt) in rows {
        assert_eq!(minor + major, d);
        let ds = dataset(minor, major);
        let mut rs = RuleSet::default_only(Label::Absence);
        rs.minority_rules.push(rule(10, 1, Label::Presence));
        let p = plan(&ds, &rs, 200).unwrap();
        assert_eq!((p.minor, p.major), (minor, major));
        assert_eq!((p.minor_target, p.major_target), (mt, jt), "|D|={d}");
        assert_eq!(p.budget.quota(RuleRef::Minority(0)), mt);
        assert_eq!(p.budget.quota(RuleRef::Default), jt);
    }
}

#[test]
fn worked_budget_example() {
    let ds = dataset(10, 190);
    let rs = RuleSet {
        minority_rules: vec![rule(10, 2, Label::Presence), rule(10, 3, Label::Presence)],
        default_rule: rule(10, 2, Label::Absence),
    };
    let p = plan(&ds, &rs, 200).unwrap();
    let q: Vec<u64> = [RuleRef::Minority(0), RuleRef::Minority(1), RuleRef::Default]
        .into_iter()
        .map(|r| p.budget.quota(r))
        .collect();
    assert_eq!(q, [101, 89, 10]);
}

proptest! {
    #[test]
    fn quota_totals(total in 0u64..1000, weights in proptest::collection::vec(0.0f64..1.0, 1..8)) {
        let (q, _) = distribute(total, &weights);
        prop_assert_eq!(q.iter().sum::<u64>(), total);
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            for (qi, w) in q.iter().zip(&weights) {
                prop_assert!((*qi as f64 - total as f64 * w / sum).abs() < 1.0);
            }
        }
    }

    #[test]
    fn targets_are_bounded(d in 0u64..100_000, frac in 0.0f64..=1.0, n in 1u64..1000) {
        let minor = (d as f64 * frac) as u64;
        let (mt, jt) = class_targets(d, minor, n);
        prop_assert!(mt <= n);
        prop_assert_eq!(mt + jt, n);
    }

    #[test]
    fn realised_plans_converge(start_minor in 0u64..100, n in 1u64..400, iters in 1usize..30) {
        let (mut minor, mut major) = (start_minor, 200 - start_minor);
        let mut prev_gap: Option<u64> = None;
        for _ in 0..iters {
            let (lo, hi) = (minor.min(major), minor.max(major));
            let (mt, jt) = class_targets(minor + major, lo, n);
            let (new_lo, new_hi) = (lo + mt, hi + jt);
            if let Some(g) = prev_gap {
                // floor division leaves a gap of one when |D| + n is odd
                prop_assert!(new_hi.abs_diff(new_lo) <= g.max(1));
            }
            if mt < n {
                prev_gap = Some(new_hi.abs_diff(new_lo));
            }
            if minor <= major { minor = new_lo; major = new_hi; } else { major = new_lo; minor = new_hi; }
        }
    }
}

use rand::Rng;
use sdnfuzz_core::exec::Execution;
use sdnfuzz_core::learner::{cross_validate, learn, Label, LabeledDataset, LearnerParams, RuleSet};
use sdnfuzz_core::planner::progress;
use sdnfuzz_core::rng::stream;

const FIELDS: [&str; 4] = ["version", "length", "noise_a", "noise_b"];
const DOMAINS: [u64; 4] = [16, 32, 8, 8];

fn planted(v: &[u64]) -> bool {
    v[0] > 5 && v[1] >= 10
}

fn dataset(n: usize, seed: u64, label: impl Fn(&[u64], &mut rand_chacha::ChaCha8Rng) -> bool) -> LabeledDataset {
    let mut rng = stream(seed, &[]);
    let mut ds = LabeledDataset::new(FIELDS.iter().map(|s| s.to_string()).collect());
    for _ in 0..n {
        let row: Vec<u64> = DOMAINS.iter().map(|&d| rng.gen_range(0..d)).collect();
        let l = if label(&row, &mut rng) { Label::Presence } else { Label::Absence };
        ds.push(row, l, 1).unwrap();
    }
    ds
}

fn fires(rs: &RuleSet, row: &[u64]) -> bool {
    let named: Vec<(&str, u64)> = FIELDS.iter().copied().zip(row.iter().copied()).collect();
    rs.classify(&named[..]).unwrap() == rs.minority_class()
}

#[test]
fn planted_predicate_is_recovered_exactly() {
    let ds = dataset(3000, 1, |v, _| !planted(v));
    let rs = learn(&ds, &LearnerParams::default()).unwrap();
    // presence is the majority here, so the rule describes absence
    assert_eq!(rs.minority_class(), Label::Absence);

    let ds = dataset(3000, 2, |v, _| planted(v));
    let rs = learn(&ds, &LearnerParams::default()).unwrap();
    assert_eq!(rs.minority_class(), Label::Presence);
    assert_eq!(rs.minority_rules.len(), 1, "{rs}");
    let mut mismatches = 0;
    for a in 0..16 {
        for b in 0..32 {
            for c in 0..8 {
                for d in 0..8 {
                    let row = [a, b, c, d];
                    mismatches += u32::from(fires(&rs, &row) != planted(&row));
                }
            }
        }
    }
    assert_eq!(mismatches, 0, "{rs}");
}

#[test]
fn classify_agrees_with_planted_oracle_on_fresh_data() {
    let ds = dataset(3000, 3, |v, _| planted(v));
    let rs = learn(&ds, &LearnerParams::default()).unwrap();
    let mut rng = stream(4, &[]);
    let n = 10_000;
    let agree = (0..n)
        .filter(|_| {
            let row: Vec<u64> = DOMAINS.iter().map(|&d| rng.gen_range(0..d)).collect();
            (rs.classify(&FIELDS.iter().copied().zip(row.iter().copied()).collect::<Vec<_>>()[..]).unwrap()
                == Label::Presence)
                == planted(&row)
        })
        .count();
    assert!(agree as f64 / n as f64 >= 0.95);
}

#[test]
fn annotated_counts_recompute_from_data() {
    let ds = dataset(2000, 5, |v, r| planted(v) ^ r.gen_bool(0.05));
    let rs = learn(&ds, &LearnerParams::default()).unwrap();
    let minority = rs.minority_class();
    for rule in &rs.minority_rules {
        let (mut t, mut f) = (0, 0);
        for (row, &l) in ds.rows().iter().zip(ds.labels()) {
            let named: Vec<(&str, u64)> = FIELDS.iter().copied().zip(row.iter().copied()).collect();
            if rule.condition.evaluate(&named[..]).unwrap() {
                t += 1;
                f += u64::from(l != minority);
            }
        }
        assert_eq!((rule.t, rule.f), (t, f));
        assert!((0.0..=1.0).contains(&rule.confidence()));
    }
    let text = rs.to_string();
    assert_eq!(text.parse::<RuleSet>().unwrap(), rs);
}

#[test]
fn separable_data_cross_validates_near_perfectly() {
    let ds = dataset(1500, 6, |v, _| planted(v));
    let m = cross_validate(&ds, 10, &LearnerParams::default(), Execution::default()).unwrap();
    assert!(m.precision() >= 0.99 && m.recall() >= 0.99, "{m:?}");
    let p = progress(&ds, &LearnerParams::default(), Execution::Sequential).unwrap();
    assert_eq!(p, m);
}

#[test]
fn label_independent_data_scores_at_baseline() {
    let ds = dataset(2000, 7, |_, r| r.gen_bool(0.45));
    let frac = ds.count(Label::Presence) as f64 / ds.len() as f64;
    let m = cross_validate(&ds, 10, &LearnerParams::default(), Execution::default()).unwrap();
    let predicted = m.tp + m.fp;
    if predicted > 0 {
        assert!((m.precision() - frac).abs() <= 0.05, "{m:?} vs {frac}");
    }
    // recall equals the share of presence samples flagged, which for an
    // uninformed classifier matches its overall flag rate
    let flag_rate = predicted as f64 / ds.len() as f64;
    assert!((m.recall() - flag_rate).abs() <= 0.05, "{m:?}");
}

#[test]
fn too_few_samples_for_folds() {
    let ds = dataset(5, 8, |v, _| planted(v));
    assert!(cross_validate(&ds, 10, &LearnerParams::default(), Execution::Sequential).is_err());
    assert!(progress(&ds, &LearnerParams::default(), Execution::Sequential).is_err());
}

#[test]
fn zero_true_positives_mean_zero_recall() {
    let mut ds = LabeledDataset::new(vec!["x".into()]);
    for i in 0..40u64 {
        let l = if i % 20 == 0 { Label::Presence } else { Label::Absence };
        ds.push(vec![i % 3], l, 1).unwrap();
    }
    let m = cross_validate(&ds, 10, &LearnerParams::default(), Execution::Sequential).unwrap();
    assert_eq!(m.tp, 0);
    assert_eq!(m.recall(), 0.0);
}

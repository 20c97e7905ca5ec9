//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use sdnfuzz::{run_campaign, CampaignConfig, CampaignOutcome, Mode};
use sdnfuzz_core::codec::{decode_as, encode, FieldEntry, MessageSchema, Sender};
use sdnfuzz_core::condition::{Atom, Comparator, Condition};
use sdnfuzz_core::fuzzer::guided_fuzz;
use sdnfuzz_core::learner::{confidence, DecisionRule, RuleRef};
use sdnfuzz_core::planner::{class_targets, distribute, BudgetEntry};
use sdnfuzz_core::rng::stream;
use sdnfuzz_core::sampler::{is_satisfiable, solve};
use sdnfuzz_core::{learn, BudgetDistribution, ControlMessage, Label, LabeledDataset, LearnerParams, RuleSet, SchemaRegistry};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn table_targets() -> Verdict {
    let started = Instant::now();
    let rows = [
        (200, 10, 190, 10),
        (400, 125, 175, 25),
        (600, 248, 152, 48),
        (800, 380, 120, 80),
        (1000, 495, 105, 95),
        (1200, 600, 100, 100),
    ];
    let got: Vec<(u64, u64)> = rows.iter().map(|&(d, minor, _, _)| class_targets(d, minor, 200)).collect();
    let want: Vec<(u64, u64)> = rows.iter().map(|&(_, _, a, b)| (a, b)).collect();
    let fast = started.elapsed() < Duration::from_secs(1);
    verdict(got == want && fast, format!("targets {got:?}"))
}

fn budget_example() -> Verdict {
    let (minor, _) = distribute(190, &[0.8, 0.7]);
    let (major, _) = distribute(10, &[0.8]);
    verdict(minor == [101, 89] && major == [10], format!("quotas {minor:?} {major:?}"))
}

fn confidence_formula() -> Verdict {
    let c = confidence(88, 7);
    let exact = 81.0 / 88.0;
    let shown = (c * 100.0).round() / 100.0;
    verdict(
        (c - exact).abs() <= 1e-12 && shown == 0.92,
        format!("c = {c:.12}, displayed {shown:.2}"),
    )
}

fn codec_census_and_round_trip() -> Verdict {
    let reg = SchemaRegistry::shipped();
    let census = [
        ("packet_in", 57, 30),
        ("hello", 8, 4),
        ("barrier_request", 8, 4),
        ("barrier_reply", 8, 4),
        ("flow_removed", 55, 22),
    ];
    let mut rng = stream(4, &[]);
    for (name, bytes, fields) in census {
        let Some(s) = reg.get(name) else {
            return verdict(false, format!("{name} missing"));
        };
        if (s.total_bytes(), s.field_count()) != (bytes, fields) {
            return verdict(false, format!("{name}: {} bytes {} fields", s.total_bytes(), s.field_count()));
        }
        for _ in 0..10_000 {
            let values: Vec<u64> = s.fields().iter().map(|f| rng.gen_range(0..=f.raw_max())).collect();
            let msg = ControlMessage::new(Arc::clone(s), values.clone()).unwrap();
            let wire = encode(&msg).unwrap();
            let back = decode_as(&wire, s).unwrap();
            if back.values() != values.as_slice() || encode(&back).unwrap() != wire {
                return verdict(false, format!("{name}: round trip mismatch"));
            }
        }
    }
    verdict(true, "5 schemas, 10000 messages each")
}

fn sampler_equivalence() -> Verdict {
    let started = Instant::now();
    let names = ["a", "b", "c"];
    let schema = MessageSchema::new(
        "nibbles",
        1,
        2,
        Sender::Switch,
        names.iter().chain(&["d"]).map(|n| FieldEntry::new(*n, 4)).collect(),
    )
    .unwrap();
    let mut rng = stream(5, &[]);
    let (mut sat_count, mut unsat_count) = (0, 0);
    for i in 0..1000 {
        let atoms = (0..rng.gen_range(1..=4))
            .map(|_| {
                let f = names[rng.gen_range(0..3)];
                Atom::new(f, Comparator::ALL[rng.gen_range(0..6)], rng.gen_range(0..18))
            })
            .collect();
        let cond = Condition::new(atoms);
        let satisfying: Vec<BTreeMap<String, u64>> = (0..16u64.pow(3))
            .map(|code| {
                names
                    .iter()
                    .enumerate()
                    .map(|(k, n)| (n.to_string(), (code >> (4 * k)) & 0xf))
                    .collect::<BTreeMap<_, _>>()
            })
            .filter(|a| cond.evaluate(a).unwrap())
            .collect();
        let claimed = is_satisfiable(&cond, &schema).unwrap();
        if claimed != !satisfying.is_empty() {
            return verdict(false, format!("condition {i} `{cond}`: satisfiable={claimed}"));
        }
        match solve(&cond, &schema, &mut rng) {
            Ok(a) => {
                sat_count += 1;
                if !cond.evaluate(&a).unwrap() || satisfying.is_empty() {
                    return verdict(false, format!("condition {i} `{cond}`: bad solution {a:?}"));
                }
            }
            Err(_) => {
                unsat_count += 1;
                if !satisfying.is_empty() {
                    return verdict(false, format!("condition {i} `{cond}`: missed solution"));
                }
            }
        }
    }
    let fast = started.elapsed() < Duration::from_secs(60);
    verdict(fast, format!("{sat_count} satisfiable, {unsat_count} unsatisfiable"))
}

fn learner_recovery() -> Verdict {
    let started = Instant::now();
    let fields: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let planted = |v: &[u64]| v[0] >= 100 && v[1] <= 60;
    let mut rng = stream(6, &[]);
    let draw = |rng: &mut sdnfuzz_core::rng::StreamRng| -> Vec<u64> { (0..4).map(|_| rng.gen_range(0..256)).collect() };
    let mut train = LabeledDataset::new(fields.clone());
    let (mut pos, mut neg) = (0, 0);
    while pos < 1000 || neg < 1000 {
        let v = draw(&mut rng);
        if planted(&v) && pos < 1000 {
            train.push(v, Label::Presence, 1).unwrap();
            pos += 1;
        } else if !planted(&v) && neg < 1000 {
            train.push(v, Label::Absence, 1).unwrap();
            neg += 1;
        }
    }
    let rules = learn(&train, &LearnerParams::default()).unwrap();
    let bound = rules.bind(&fields).unwrap();
    let mut m = sdnfuzz_core::learner::Metrics::default();
    for _ in 0..5000 {
        let v = draw(&mut rng);
        let actual = if planted(&v) { Label::Presence } else { Label::Absence };
        m.add(bound.classify(&v), actual);
    }
    let fast = started.elapsed() < Duration::from_secs(60);
    verdict(
        m.precision() >= 0.99 && m.recall() >= 0.99 && fast,
        format!("precision {:.4} recall {:.4}", m.precision(), m.recall()),
    )
}

fn mutation_invariants() -> Verdict {
    let reg = SchemaRegistry::shipped();
    let template = reg.get("packet_in").unwrap().template();
    let rule = |text: &str| DecisionRule {
        condition: text.parse().unwrap(),
        prediction: Label::Presence,
        t: 50,
        f: 5,
    };
    let rules = RuleSet {
        minority_rules: vec![
            rule("reason >= 11 AND table_id >= 192 AND eth_type = 2048"),
            rule("version <= 3 AND length != 57"),
            rule("ip_ttl < 10 AND ip_protocol = 17 AND xid >= 1000"),
        ],
        default_rule: DecisionRule {
            condition: Condition::always(),
            prediction: Label::Absence,
            t: 100,
            f: 3,
        },
    };
    let mut rng = stream(10, &[]);
    let mut checked = 0;
    for round in 0..100 {
        let mut budget = BudgetDistribution {
            entries: vec![
                BudgetEntry { rule: RuleRef::Minority(0), quota: 30 },
                BudgetEntry { rule: RuleRef::Minority(1), quota: 30 },
                BudgetEntry { rule: RuleRef::Minority(2), quota: 20 },
                BudgetEntry { rule: RuleRef::Default, quota: 20 },
            ],
        };
        let mu = if round % 2 == 0 { 1.0 / 30.0 } else { 0.5 };
        while !budget.is_empty() {
            let a = guided_fuzz(&template, &mut budget, &rules, mu, &mut rng).unwrap();
            let r = a.applied_rule.unwrap();
            let satisfied = match r {
                RuleRef::Minority(i) => rules.minority_rules[i].condition.evaluate(&a.after).unwrap(),
                RuleRef::Default => rules.firing_rule(&a.after).unwrap().is_none(),
            };
            let conds: Vec<&Condition> = match r {
                RuleRef::Minority(i) => vec![&rules.minority_rules[i].condition],
                RuleRef::Default => rules.minority_rules.iter().map(|m| &m.condition).collect(),
            };
            let touched_rule_field = a.mutated_fields.iter().any(|f| conds.iter().any(|c| c.mentions(f)));
            if !satisfied || touched_rule_field {
                return verdict(false, format!("fuzz {checked} with {r}: satisfied={satisfied}"));
            }
            checked += 1;
        }
    }
    verdict(checked == 10_000, format!("{checked} guided fuzzes"))
}

struct Campaigns {
    guided: CampaignOutcome,
    guided_secs: f64,
    random: CampaignOutcome,
    repeat_identical: Result<(), String>,
}

fn campaigns() -> Campaigns {
    let dir = tempfile::tempdir().unwrap();
    let base = CampaignConfig::default();
    let mut first = base.clone();
    first.output_dir = Some(dir.path().join("first"));
    let started = Instant::now();
    let guided = run_campaign(&first).unwrap();
    let guided_secs = started.elapsed().as_secs_f64();

    let mut second = base.clone();
    second.output_dir = Some(dir.path().join("second"));
    run_campaign(&second).unwrap();
    let mut repeat_identical = Ok(());
    for file in ["dataset.csv", "report.json", "actions.jsonl", "ruleset.txt"] {
        let a = fs::read(dir.path().join("first").join(file)).unwrap();
        let b = fs::read(dir.path().join("second").join(file)).unwrap();
        if a != b {
            repeat_identical = Err(format!("{file} differs"));
            break;
        }
    }

    let random = run_campaign(&CampaignConfig {
        mode: Mode::Random,
        ..base
    })
    .unwrap();
    Campaigns {
        guided,
        guided_secs,
        random,
        repeat_identical,
    }
}

fn end_to_end_accuracy(c: &Campaigns) -> Verdict {
    let s = &c.guided.report.summary;
    let (p, r) = (s.heldout_precision.unwrap_or(0.0), s.heldout_recall.unwrap_or(0.0));
    verdict(
        p >= 0.95 && r >= 0.80 && c.guided_secs < 600.0,
        format!("held-out precision {p:.4} recall {r:.4} in {:.1}s", c.guided_secs),
    )
}

fn guided_finds_more_failures(c: &Campaigns) -> Verdict {
    let g = c.guided.report.summary.total_failures;
    let r = c.random.report.summary.total_failures;
    verdict(g >= 10 * r, format!("guided {g} vs random {r} ({:.1}x)", g as f64 / r.max(1) as f64))
}

fn balancing(c: &Campaigns) -> Verdict {
    let its = &c.guided.report.iterations;
    let fractions: Vec<String> = its.iter().map(|r| format!("{:.3}", r.minority_fraction)).collect();
    let Some(start) = its.iter().skip(1).position(|r| r.balance_reachable).map(|i| i + 1) else {
        return verdict(false, format!("target never within reach; fractions {fractions:?}"));
    };
    let ok = its[start..].iter().all(|r| (0.45..=0.55).contains(&r.minority_fraction));
    verdict(ok, format!("from iteration {}: {:?}", its[start].index, &fractions[start..]))
}

fn reproducibility(c: &Campaigns) -> Verdict {
    match &c.repeat_identical {
        Ok(()) => verdict(true, "dataset, report, actions and rules byte-identical"),
        Err(e) => verdict(false, e.clone()),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(u32, &str, Verdict)> = vec![
        (1, "planner class targets", table_targets()),
        (2, "budget distribution", budget_example()),
        (3, "rule confidence", confidence_formula()),
        (4, "codec census and round trip", codec_census_and_round_trip()),
        (5, "sampler vs enumeration", sampler_equivalence()),
        (6, "learner recovery", learner_recovery()),
    ];
    let c = campaigns();
    results.push((7, "end-to-end model accuracy", end_to_end_accuracy(&c)));
    results.push((8, "guided vs random failures", guided_finds_more_failures(&c)));
    results.push((9, "dataset balancing", balancing(&c)));
    results.push((10, "mutation invariants", mutation_invariants()));
    results.push((11, "reproducibility", reproducibility(&c)));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, v) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

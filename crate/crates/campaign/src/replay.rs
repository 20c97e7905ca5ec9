//! Failure-inducing corpora generated from a learned rule set.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use sdnfuzz_core::codec::encode;
use sdnfuzz_core::fuzzer::fuzz_with_rule;
use sdnfuzz_core::learner::RuleRef;
use sdnfuzz_core::rng::{derive_seed, stream};
use sdnfuzz_core::{ControlMessage, Label, MessageSchema, RuleSet, SchemaRegistry};
use sdnfuzz_harness::SutServer;
use serde::Serialize;

use crate::campaign::run_through_proxy;
use crate::CampaignError;

#[derive(Debug, Clone, Serialize)]
pub struct ReplayCase {
    pub rule: RuleRef,
    pub rule_text: String,
    pub message: ControlMessage,
}

/// Rules whose prediction is presence: the minority rules when presence is
/// the minority class, otherwise the default rule.
pub fn failure_rules(rules: &RuleSet) -> Vec<RuleRef> {
    if rules.minority_class() == Label::Presence {
        (0..rules.minority_rules.len()).map(RuleRef::Minority).collect()
    } else {
        vec![RuleRef::Default]
    }
}

/// Draws `count` failure-inducing messages. Each picks a presence rule with
/// probability proportional to its confidence (uniformly if all are zero)
/// and solves it on the template. Rules the sampler cannot satisfy are
/// skipped.
pub fn generate_corpus(rules: &RuleSet, schema: &Arc<MessageSchema>, count: usize, seed: u64) -> Vec<ReplayCase> {
    let template = schema.template();
    let mut rng = stream(seed, &[0x7265_706c]);
    let mut live = failure_rules(rules);
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count && !live.is_empty() {
        let weights: Vec<f64> = live.iter().map(|&r| rules.rule(r).confidence()).collect();
        let pick = match WeightedIndex::new(&weights) {
            Ok(w) => w.sample(&mut rng),
            Err(_) => rng.gen_range(0..live.len()),
        };
        let rule = live[pick];
        match fuzz_with_rule(&template, rules, rule, 0.0, &mut rng) {
            Ok(action) => cases.push(ReplayCase {
                rule,
                rule_text: action.rule_text.unwrap_or_default(),
                message: action.after,
            }),
            Err(e) => {
                tracing::warn!(%rule, error = %e, "skipping unsatisfiable rule");
                live.remove(pick);
            }
        }
    }
    if cases.len() < count {
        tracing::warn!(requested = count, produced = cases.len(), "no satisfiable presence rules left");
    }
    cases
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    file: String,
    rule: RuleRef,
    rule_text: &'a str,
    fields: std::collections::BTreeMap<String, u64>,
}

/// Writes `case_NNNNN.bin` per message plus `manifest.json`.
pub fn write_corpus(dir: &Path, cases: &[ReplayCase]) -> Result<(), CampaignError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CampaignError::Persistence { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut manifest = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let file = format!("case_{i:05}.bin");
        let path = dir.join(&file);
        fs::write(&path, encode(&case.message)?).map_err(io(&path))?;
        manifest.push(ManifestEntry {
            file,
            rule: case.rule,
            rule_text: &case.rule_text,
            fields: case.message.to_map(),
        });
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io(&path))
}

/// Sends every case through the proxy to `sut` and returns the labels.
pub fn run_corpus(
    registry: &SchemaRegistry,
    sut: &SutServer,
    cases: &[ReplayCase],
    seed: u64,
) -> Result<Vec<Label>, CampaignError> {
    cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let nonce = derive_seed(seed, &[0x0072_756e, i as u64]) as u32;
            run_through_proxy(registry, sut, nonce, |_| (case.message.clone(), ()))
                .map(|(_, outcome)| outcome.label)
                .map_err(|e| CampaignError::Config(format!("replay run {i} failed: {e}")))
        })
        .collect()
}

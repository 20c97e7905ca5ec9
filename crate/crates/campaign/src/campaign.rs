use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use sdnfuzz_core::codec::{decode_as, encode};
use sdnfuzz_core::fuzzer::{fuzz_with_rule, initial_fuzz, schema_random_fuzz};
use sdnfuzz_core::learner::{evaluate, RuleRef};
use sdnfuzz_core::planner::{progress, should_stop, StopReason};
use sdnfuzz_core::rng::{derive_seed, stream, StreamRng};
use sdnfuzz_core::{
    learn, plan, ControlMessage, Execution, FuzzAction, Label, LabeledDataset, LearnerParams, RuleSet, SchemaRegistry,
};
use sdnfuzz_harness::{FailureMode, InterceptConfig, Proxy, RunOutcome, SutServer};
use serde::Serialize;

use crate::config::{CampaignConfig, Mode};
use crate::holdout::heldout_set;
use crate::persist::{self, Store};
use crate::report::{CampaignReport, CampaignSummary, IterationRecord};
use crate::CampaignError;

const TAG_PLAN: u64 = 1;
const TAG_RUN: u64 = 2;
const TAG_NONCE: u64 = 3;
const TAG_LEARN: u64 = 4;
const TAG_HELDOUT: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Initial,
    SchemaRandom,
    Rule(RuleRef),
}

/// One line of `actions.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct ActionRecord {
    pub iteration: u32,
    pub run: usize,
    pub planned: RunKind,
    /// The planned rule could not be solved, so initial fuzzing was used.
    pub unsatisfiable_fallback: bool,
    pub attempts: u32,
    pub label: Label,
    pub detail: Option<FailureMode>,
    pub action: FuzzAction,
}

pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub dataset: LabeledDataset,
    pub rules: RuleSet,
    pub actions: Vec<ActionRecord>,
}

/// Learner parameters with the seed tied to the campaign seed.
pub fn learner_params(cfg: &CampaignConfig) -> LearnerParams {
    LearnerParams {
        seed: derive_seed(cfg.seed, &[TAG_LEARN, cfg.learner.seed]),
        ..cfg.learner.clone()
    }
}

/// Relays one procedure through a fresh proxy whose hook rewrites the target
/// message with `rewrite`. Returns what `rewrite` produced and the outcome.
pub(crate) fn run_through_proxy<T, F>(
    registry: &SchemaRegistry,
    sut: &SutServer,
    nonce: u32,
    rewrite: F,
) -> Result<(T, RunOutcome), String>
where
    T: Send,
    F: FnOnce(ControlMessage) -> (ControlMessage, T) + Send,
{
    let schema = Arc::clone(&sut.oracle().schema);
    let cfg = InterceptConfig::new(sut.addr(), &schema.type_name, registry).map_err(|e| e.to_string())?;
    let proxy = Proxy::bind(cfg, registry).map_err(|e| e.to_string())?;
    let addr: SocketAddr = proxy.local_addr().map_err(|e| e.to_string())?;
    let mut produced: Option<T> = None;
    let mut hook_error: Option<String> = None;
    let (record, outcome) = thread::scope(|s| {
        let produced = &mut produced;
        let hook_error = &mut hook_error;
        let mut rewrite = Some(rewrite);
        let session = s.spawn(move || {
            proxy.run_session(move |bytes: &[u8]| {
                let Some(f) = rewrite.take() else {
                    return bytes.to_vec();
                };
                let msg = match decode_as(bytes, &schema) {
                    Ok(m) => m,
                    Err(e) => {
                        *hook_error = Some(format!("intercepted target does not decode: {e}"));
                        return bytes.to_vec();
                    }
                };
                let (after, out) = f(msg);
                *produced = Some(out);
                encode(&after).expect("fuzzed values fit their fields")
            })
        });
        let outcome = sut.switch().run_procedure(addr, nonce);
        if outcome.is_err() {
            // Unblocks the proxy if the switch never connected.
            let _ = TcpStream::connect(addr);
        }
        (session.join().expect("proxy session panicked"), outcome)
    });
    let outcome = outcome.map_err(|e| e.to_string())?;
    if let Some(e) = record.error.or(hook_error) {
        return Err(e);
    }
    match produced {
        Some(p) if record.target_seen => Ok((p, outcome)),
        _ => Err("target message was not intercepted".into()),
    }
}

struct RunResult {
    action: FuzzAction,
    fallback: bool,
    outcome: RunOutcome,
    attempts: u32,
}

fn fuzz(kind: RunKind, msg: &ControlMessage, rules: &RuleSet, mu: f64, rng: &mut StreamRng) -> (FuzzAction, bool) {
    match kind {
        RunKind::Initial => (initial_fuzz(msg, rng), false),
        RunKind::SchemaRandom => (schema_random_fuzz(msg, rng), false),
        RunKind::Rule(r) => match fuzz_with_rule(msg, rules, r, mu, rng) {
            Ok(a) => (a, false),
            Err(e) => {
                tracing::warn!(rule = %r, error = %e, "falling back to initial fuzzing");
                (initial_fuzz(msg, rng), true)
            }
        },
    }
}

struct RunCtx<'a> {
    cfg: &'a CampaignConfig,
    registry: &'a SchemaRegistry,
    sut: &'a SutServer,
    rules: &'a RuleSet,
    mu: f64,
}

impl RunCtx<'_> {
    fn execute(&self, iteration: u32, run: usize, kind: RunKind) -> Result<RunResult, String> {
        let tags = [TAG_RUN, u64::from(iteration), run as u64];
        let rng = stream(self.cfg.seed, &tags);
        let nonce = derive_seed(self.cfg.seed, &[TAG_NONCE, u64::from(iteration), run as u64]) as u32;
        let mut last = String::new();
        for attempt in 0..=self.cfg.max_retries {
            let mut rng = rng.clone();
            let res = run_through_proxy(self.registry, self.sut, nonce, |msg| {
                let (action, fallback) = fuzz(kind, &msg, self.rules, self.mu, &mut rng);
                (action.after.clone(), (action, fallback))
            });
            match res {
                Ok(((action, fallback), outcome)) => {
                    return Ok(RunResult {
                        action,
                        fallback,
                        outcome,
                        attempts: attempt + 1,
                    })
                }
                Err(e) => {
                    tracing::warn!(iteration, run, attempt, error = %e, "run failed");
                    last = e;
                }
            }
        }
        Err(last)
    }
}

fn plan_runs(
    cfg: &CampaignConfig,
    last_plan: Option<&sdnfuzz_core::IterationPlan>,
    rng: &mut StreamRng,
) -> Vec<RunKind> {
    let n = cfg.n_per_iteration;
    match (cfg.mode, last_plan) {
        (Mode::SchemaRandom, _) => vec![RunKind::SchemaRandom; n],
        (Mode::Random, _) | (Mode::Guided, None) => vec![RunKind::Initial; n],
        (Mode::Guided, Some(p)) if p.fallback_initial => vec![RunKind::Initial; n],
        (Mode::Guided, Some(p)) => {
            let mut budget = p.budget.clone();
            (0..n)
                .map(|_| match budget.draw(rng) {
                    Some(r) => {
                        budget.consume(r);
                        RunKind::Rule(r)
                    }
                    None => RunKind::Initial,
                })
                .collect()
        }
    }
}

/// Runs a full campaign. Artifacts are written when `cfg.output_dir` is set.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignOutcome, CampaignError> {
    let registry = Arc::new(SchemaRegistry::shipped());
    cfg.validate(&registry)?;
    let oracle = cfg
        .oracle
        .build(&registry)
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    let schema = Arc::clone(&oracle.schema);
    let sut = SutServer::start(Arc::clone(&registry), oracle)?;
    let mut store = cfg.output_dir.as_deref().map(Store::create).transpose()?;

    let started = Instant::now();
    let exec = Execution::Parallel { threads: cfg.workers };
    let params = learner_params(cfg);
    let mu = cfg.mutation_rate_for(schema.field_count());
    let policy = cfg.stop_policy();
    let mut plan_rng = stream(cfg.seed, &[TAG_PLAN]);

    let mut dataset = LabeledDataset::new(schema.field_names());
    let mut rules = RuleSet::default_only(Label::Absence);
    let mut last_plan = None;
    let mut records = Vec::new();
    let mut actions = Vec::new();
    let mut history = Vec::new();
    let mut stop_reason = None;

    let mut report = CampaignReport {
        config: cfg.clone(),
        iterations: Vec::new(),
        summary: CampaignSummary {
            iterations_run: 0,
            total_samples: 0,
            total_failures: 0,
            final_precision: None,
            final_recall: None,
            heldout: None,
            heldout_precision: None,
            heldout_recall: None,
            stop_reason: None,
            final_ruleset: String::new(),
        },
    };

    for iteration in 1..=cfg.max_iterations {
        let kinds = plan_runs(cfg, last_plan.as_ref(), &mut plan_rng);
        let ctx = RunCtx {
            cfg,
            registry: &registry,
            sut: &sut,
            rules: &rules,
            mu,
        };
        let results = exec.map_indexed(kinds.len(), |j| ctx.execute(iteration, j, kinds[j]));

        let mut record = IterationRecord {
            index: iteration,
            samples_added: 0,
            dataset_size: 0,
            minority: Label::Presence,
            minority_count: 0,
            majority_count: 0,
            minority_fraction: 0.0,
            presence_count: 0,
            precision: None,
            recall: None,
            confusion: None,
            failure_count: 0,
            guided_runs: 0,
            initial_runs: 0,
            unsatisfiable_fallbacks: 0,
            discarded_runs: 0,
            retries: 0,
            rule_count: 0,
            ruleset_file: persist::ruleset_file(iteration),
            plan_file: persist::plan_file(iteration),
            balance_reachable: true,
        };
        let first_action = actions.len();
        for (j, (kind, res)) in kinds.iter().zip(results).enumerate() {
            let r = match res {
                Ok(r) => r,
                Err(e) => {
                    tracing::error!(iteration, run = j, error = %e, "run discarded after retries");
                    record.discarded_runs += 1;
                    continue;
                }
            };
            record.retries += (r.attempts - 1) as usize;
            match (kind, r.fallback) {
                (RunKind::Rule(_), false) => record.guided_runs += 1,
                (RunKind::Rule(_), true) => {
                    record.unsatisfiable_fallbacks += 1;
                    record.initial_runs += 1;
                }
                _ => record.initial_runs += 1,
            }
            if r.outcome.label == Label::Presence {
                record.failure_count += 1;
            }
            dataset.push(r.action.after.values().to_vec(), r.outcome.label, iteration)?;
            record.samples_added += 1;
            actions.push(ActionRecord {
                iteration,
                run: j,
                planned: *kind,
                unsatisfiable_fallback: r.fallback,
                attempts: r.attempts,
                label: r.outcome.label,
                detail: r.outcome.detail,
                action: r.action,
            });
        }

        rules = learn(&dataset, &params)?;
        let metrics = match progress(&dataset, &params, exec) {
            Ok(m) => Some(m),
            Err(sdnfuzz_core::planner::PlanError::TooFewSamples { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let next = plan(&dataset, &rules, cfg.n_per_iteration as u64)?;

        let minority = rules.minority_class();
        record.dataset_size = dataset.len();
        record.minority = minority;
        record.minority_count = dataset.count(minority);
        record.majority_count = dataset.len() - record.minority_count;
        record.minority_fraction = if dataset.is_empty() {
            0.0
        } else {
            record.minority_count as f64 / dataset.len() as f64
        };
        record.presence_count = dataset.count(Label::Presence);
        record.precision = metrics.map(|m| m.precision());
        record.recall = metrics.map(|m| m.recall());
        record.confusion = metrics;
        record.rule_count = rules.minority_rules.len();
        record.balance_reachable = next.balance_reachable();
        tracing::info!(
            iteration,
            samples = dataset.len(),
            failures = record.failure_count,
            precision = ?record.precision,
            recall = ?record.recall,
            rules = record.rule_count,
            "iteration done"
        );
        if let Some(m) = metrics {
            history.push((m.precision(), m.recall()));
        }

        report.summary.iterations_run = iteration;
        report.summary.total_samples = dataset.len();
        report.summary.total_failures += record.failure_count;
        report.summary.final_precision = record.precision;
        report.summary.final_recall = record.recall;
        report.summary.final_ruleset = rules.to_string();
        records.push(record);
        report.iterations = records.clone();

        if let Some(store) = store.as_mut() {
            store.append_dataset(&dataset)?;
            store.append_actions(&actions[first_action..])?;
            store.write_ruleset(iteration, &rules)?;
            store.write_plan(iteration, &next)?;
            store.write_report(&report)?;
        }
        last_plan = Some(next);

        stop_reason = should_stop(&history, started.elapsed(), &policy);
        if stop_reason.is_some() {
            break;
        }
    }
    if stop_reason.is_none() && policy.time_budget.is_some_and(|b| started.elapsed() >= b) {
        stop_reason = Some(StopReason::BudgetExhausted);
    }
    report.summary.stop_reason = stop_reason;

    if cfg.heldout_size > 0 {
        let heldout = heldout_set(sut.oracle(), cfg.heldout_size, derive_seed(cfg.seed, &[TAG_HELDOUT]));
        let m = evaluate(&rules, &heldout)?;
        report.summary.heldout_precision = Some(m.precision());
        report.summary.heldout_recall = Some(m.recall());
        report.summary.heldout = Some(m);
    }
    if let Some(store) = store.as_ref() {
        store.write_text(persist::FINAL_RULESET_FILE, &rules.to_string())?;
        store.write_report(&report)?;
    }
    Ok(CampaignOutcome {
        report,
        dataset,
        rules,
        actions,
    })
}


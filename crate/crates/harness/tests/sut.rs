use std::sync::Arc;
use std::thread;

use sdnfuzz_core::codec::{decode_as, encode};
use sdnfuzz_core::{Label, SchemaRegistry};
use sdnfuzz_harness::{FailureMode, InterceptConfig, OracleConfig, Procedure, Proxy, RunOutcome, SutServer};

fn server(cfg: &OracleConfig) -> (Arc<SchemaRegistry>, SutServer) {
    let reg = Arc::new(SchemaRegistry::shipped());
    let oracle = cfg.build(&reg).unwrap();
    let sut = SutServer::start(Arc::clone(&reg), oracle).unwrap();
    (reg, sut)
}

/// One run through the proxy, setting `fields` on the target message.
fn run(reg: &SchemaRegistry, sut: &SutServer, fields: &[(&str, u64)], nonce: u32) -> RunOutcome {
    let target = &sut.oracle().schema;
    let proxy = Proxy::bind(InterceptConfig::new(sut.addr(), &target.type_name, reg).unwrap(), reg).unwrap();
    let addr = proxy.local_addr().unwrap();
    let schema = Arc::clone(target);
    thread::scope(|s| {
        let t = s.spawn(|| {
            proxy.run_session(|m: &[u8]| {
                let mut msg = decode_as(m, &schema).unwrap();
                for &(f, v) in fields {
                    msg.set(f, v).unwrap();
                }
                encode(&msg).unwrap()
            })
        });
        let outcome = sut.switch().run_procedure(addr, nonce).unwrap();
        let record = t.join().unwrap();
        assert!(record.target_seen && record.error.is_none(), "{record:?}");
        outcome
    })
}

const SATISFYING: [(&str, u64); 3] = [("reason", 11), ("table_id", 192), ("eth_type", 2048)];

#[test]
fn unfuzzed_runs_pass() {
    let mut cfg = OracleConfig::default_planted();
    cfg.noise_rate = 0.0;
    let (reg, sut) = server(&cfg);
    let out = run(&reg, &sut, &[], 1);
    assert_eq!(out.label, Label::Absence);
    assert!(out.observations.ping_ok);
    let direct = sut.switch().run_procedure(sut.addr(), 2).unwrap();
    assert_eq!(direct.label, Label::Absence);
}

#[test]
fn satisfying_message_fails_without_noise() {
    let mut cfg = OracleConfig::default_planted();
    cfg.noise_rate = 0.0;
    let (reg, sut) = server(&cfg);
    let out = run(&reg, &sut, &SATISFYING, 1);
    assert_eq!(out.label, Label::Presence);
    assert_eq!(out.detail, Some(FailureMode::SwitchDisconnect));
    let near_miss = run(&reg, &sut, &[("reason", 11), ("table_id", 191)], 2);
    assert_eq!(near_miss.label, Label::Absence);
}

#[test]
fn ground_truth_fidelity_without_noise() {
    let mut cfg = OracleConfig::default_planted();
    cfg.noise_rate = 0.0;
    let (reg, sut) = server(&cfg);
    for (i, t) in [0u64, 191, 192, 255].into_iter().enumerate() {
        for r in [0u64, 10, 11, 15] {
            let out = run(&reg, &sut, &[("table_id", t), ("reason", r)], i as u32);
            let expect = t >= 192 && r >= 11;
            assert_eq!(out.label == Label::Presence, expect, "table_id={t} reason={r}");
        }
    }
}

#[test]
fn noise_flips_five_percent() {
    let mut cfg = OracleConfig::default_planted();
    cfg.noise_rate = 0.05;
    let (reg, sut) = server(&cfg);
    let runs = 2000;
    let presence = (0..runs)
        .filter(|&i| run(&reg, &sut, &SATISFYING, i).label == Label::Presence)
        .count();
    let freq = presence as f64 / runs as f64;
    assert!((freq - 0.95).abs() <= 0.02, "{freq}");
    let again = (0..200)
        .map(|i| run(&reg, &sut, &SATISFYING, i).label)
        .collect::<Vec<_>>();
    let first = (0..200)
        .map(|i| run(&reg, &sut, &SATISFYING, i).label)
        .collect::<Vec<_>>();
    assert_eq!(again, first);
}

#[test]
fn broadcast_storm_on_controller_and_switch_side_targets() {
    for (message_type, predicate) in [("barrier_reply", "xid >= 1000"), ("barrier_request", "version >= 5")] {
        let cfg = OracleConfig {
            message_type: message_type.into(),
            predicate: predicate.into(),
            noise_rate: 0.0,
            failure_mode: FailureMode::BroadcastStorm,
            seed: 1,
            procedure: None,
        };
        let (reg, sut) = server(&cfg);
        assert_eq!(sut.oracle().procedure, Procedure::SwitchConnect);
        let calm = run(&reg, &sut, &[], 3);
        assert_eq!(calm.label, Label::Absence, "{message_type}");
        let field = predicate.split(' ').next().unwrap();
        let value = if field == "version" { 200 } else { 5000 };
        let storm = run(&reg, &sut, &[(field, value)], 3);
        assert_eq!(storm.label, Label::Presence, "{message_type}");
        assert_eq!(storm.detail, Some(FailureMode::BroadcastStorm));
        assert!(storm.observations.floods >= 3);
        assert!(storm.observations.ping_ok);
    }
}

#[test]
fn default_hit_rate_matches_closed_form_and_sampling() {
    use sdnfuzz_core::fuzzer::initial_fuzz;
    use sdnfuzz_core::rng::stream;
    let reg = SchemaRegistry::shipped();
    let oracle = OracleConfig::default_planted().build(&reg).unwrap();
    let nf = reg.get("packet_in").unwrap().field_count() as i32;
    // reason >= 11 over 0..=15, table_id >= 192 over 0..=255, eth_type kept or redrawn to 2048.
    let closed = (0.5 * 5.0 / 16.0) * (0.5 * 64.0 / 256.0) * (0.5 + 0.5 / 65536.0) / (1.0 - 0.5f64.powi(nf));
    let analytic = oracle.initial_hit_rate().unwrap();
    assert!((analytic - closed).abs() < 1e-12, "{analytic} vs {closed}");

    let template = oracle.schema.template();
    let mut rng = stream(99, &[]);
    let draws = 400_000;
    let hits = (0..draws)
        .filter(|_| oracle.truth(&initial_fuzz(&template, &mut rng).after).unwrap())
        .count();
    let freq = hits as f64 / draws as f64;
    let sd = (closed * (1.0 - closed) / draws as f64).sqrt();
    assert!((freq - closed).abs() < 4.0 * sd, "{freq} vs {closed}");
}

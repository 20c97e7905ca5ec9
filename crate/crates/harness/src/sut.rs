//! Simulated system under test: a scripted mock controller, a mock switch
//! that drives the test procedure, and failure detection.
//!
//! Ground truth comes from a planted [`FailureOracle`]. The endpoint that
//! receives the target message evaluates it and misbehaves when the oracle
//! says the message is failure-inducing.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use sdnfuzz_core::codec::{decode_as, encode, CodecError, MessageSchema, Sender};
use sdnfuzz_core::condition::{Condition, ConditionError, FieldSource};
use sdnfuzz_core::sampler::{field_intervals, SampleError};
use sdnfuzz_core::{ControlMessage, Label, SchemaRegistry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PACKET_OUT: u8 = 13;
pub const ECHO_REQUEST: u8 = 2;
pub const FLOOD_PORT: u32 = 0xffff_fffb;
pub const STORM_FLOODS: u32 = 3;

#[derive(Debug, Error)]
pub enum SutError {
    #[error("oracle config: {0}")]
    Config(String),
    #[error("message type `{0}` is not in the schema registry")]
    UnknownMessageType(String),
    #[error("procedure {procedure:?} never carries `{message_type}`")]
    NotInProcedure { procedure: Procedure, message_type: String },
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("run timed out: {0}")]
    Timeout(io::Error),
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for SutError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => SutError::Timeout(e),
            _ => SutError::Io(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    SwitchDisconnect,
    BroadcastStorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    /// Handshake, then a packet_in the controller answers with a packet_out.
    PingExchange,
    /// Handshake plus a barrier round trip, answered with an echo request.
    SwitchConnect,
}

impl Procedure {
    /// Message types the switch sends, in order, after reading the
    /// controller's opening messages.
    pub fn switch_script(self) -> &'static [&'static str] {
        match self {
            Procedure::PingExchange => &["hello", "packet_in", "flow_removed"],
            Procedure::SwitchConnect => &["hello", "barrier_reply"],
        }
    }

    /// Message types the controller opens the connection with.
    pub fn controller_script(self) -> &'static [&'static str] {
        match self {
            Procedure::PingExchange => &["hello"],
            Procedure::SwitchConnect => &["hello", "barrier_request"],
        }
    }

    /// The first procedure that carries `message_type`.
    pub fn for_message(message_type: &str) -> Option<Procedure> {
        [Procedure::PingExchange, Procedure::SwitchConnect]
            .into_iter()
            .find(|p| p.switch_script().contains(&message_type) || p.controller_script().contains(&message_type))
    }
}

/// Oracle configuration as written in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub message_type: String,
    /// Condition in the rule-set text syntax.
    pub predicate: String,
    #[serde(default)]
    pub noise_rate: f64,
    pub failure_mode: FailureMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub procedure: Option<Procedure>,
}

impl OracleConfig {
    /// Packet_in oracle whose hit rate under initial fuzzing is just under
    /// one percent.
    pub fn default_planted() -> Self {
        Self {
            message_type: "packet_in".into(),
            predicate: "reason >= 11 AND table_id >= 192 AND eth_type = 2048".into(),
            noise_rate: 0.02,
            failure_mode: FailureMode::SwitchDisconnect,
            seed: 0x5d_f022,
            procedure: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SutError> {
        toml::from_str(text).map_err(|e| SutError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("oracle config serialises")
    }

    pub fn procedure(&self) -> Result<Procedure, SutError> {
        let p = match self.procedure {
            Some(p) => p,
            None => Procedure::for_message(&self.message_type).ok_or_else(|| SutError::NotInProcedure {
                procedure: Procedure::PingExchange,
                message_type: self.message_type.clone(),
            })?,
        };
        if !p.switch_script().contains(&self.message_type.as_str())
            && !p.controller_script().contains(&self.message_type.as_str())
        {
            return Err(SutError::NotInProcedure {
                procedure: p,
                message_type: self.message_type.clone(),
            });
        }
        Ok(p)
    }

    pub fn build(&self, registry: &SchemaRegistry) -> Result<FailureOracle, SutError> {
        let schema = registry
            .get(&self.message_type)
            .ok_or_else(|| SutError::UnknownMessageType(self.message_type.clone()))?;
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(SutError::Config(format!("noise_rate {} not in [0, 1)", self.noise_rate)));
        }
        let predicate: Condition = self.predicate.parse()?;
        field_intervals(&predicate, schema)?;
        Ok(FailureOracle {
            predicate,
            noise_rate: self.noise_rate,
            failure_mode: self.failure_mode,
            seed: self.seed,
            schema: Arc::clone(schema),
            procedure: self.procedure()?,
        })
    }
}

/// The planted ground truth.
#[derive(Debug, Clone)]
pub struct FailureOracle {
    pub predicate: Condition,
    pub noise_rate: f64,
    pub failure_mode: FailureMode,
    pub seed: u64,
    pub schema: Arc<MessageSchema>,
    pub procedure: Procedure,
}

impl FailureOracle {
    /// Noise-free verdict.
    pub fn truth<S: FieldSource + ?Sized>(&self, values: &S) -> Result<bool, ConditionError> {
        self.predicate.evaluate(values)
    }

    /// Whether the label flips, keyed on the bytes the judging endpoint saw.
    pub fn noise_flip(&self, key: &[u8]) -> bool {
        if self.noise_rate <= 0.0 {
            return false;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key);
        let digest = h.finalize();
        let mut top = [0u8; 8];
        top.copy_from_slice(&digest[..8]);
        let u = u64::from_be_bytes(top) as f64 / 18_446_744_073_709_551_616.0;
        u < self.noise_rate
    }

    pub fn is_failure(&self, msg: &ControlMessage, key: &[u8]) -> bool {
        self.truth(msg).unwrap_or(false) ^ self.noise_flip(key)
    }

    fn evaluated_by_controller(&self) -> bool {
        self.schema.sender == Sender::Switch
    }

    /// Probability that one initial-fuzz step of the template satisfies
    /// the predicate: each field is replaced with probability one half
    /// (conditioned on a nonempty subset) by a uniform domain value.
    pub fn initial_hit_rate(&self) -> Result<f64, SutError> {
        let template = self.schema.template();
        let intervals = field_intervals(&self.predicate, &self.schema)?;
        let nf = self.schema.field_count() as i32;
        let (mut both, mut orig) = (1.0f64, 1.0f64);
        for fi in &intervals {
            let spec = self.schema.field(&fi.field).expect("validated field");
            let (lo, hi) = spec.domain;
            let hits: u128 = fi
                .allowed
                .ranges()
                .iter()
                .map(|&(a, b)| {
                    let (a, b) = (a.max(lo), b.min(hi));
                    if a <= b {
                        u128::from(b - a) + 1
                    } else {
                        0
                    }
                })
                .sum();
            let a_f = hits as f64 / (u128::from(hi - lo) + 1) as f64;
            let b_f = f64::from(u8::from(fi.allowed.contains(template.get(&fi.field).expect("field"))));
            both *= 0.5 * a_f + 0.5 * b_f;
            orig *= b_f;
        }
        let empty = 0.5f64.powi(nf);
        Ok((both - empty * orig) / (1.0 - empty))
    }
}

/// What the mock switch saw after running its procedure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observations {
    pub closed: bool,
    pub ping_ok: bool,
    pub floods: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub label: Label,
    pub detail: Option<FailureMode>,
    pub duration_ms: u64,
    pub observations: Observations,
}

/// Failure detection: a disconnect counts only when the ping also fails.
pub fn detect(obs: Observations) -> (Label, Option<FailureMode>) {
    if obs.closed && !obs.ping_ok {
        (Label::Presence, Some(FailureMode::SwitchDisconnect))
    } else if obs.floods >= 1 {
        (Label::Presence, Some(FailureMode::BroadcastStorm))
    } else {
        (Label::Absence, None)
    }
}

fn header(type_code: u8, len: u16, xid: u32) -> Vec<u8> {
    let mut m = Vec::with_capacity(len as usize);
    m.push(4);
    m.push(type_code);
    m.extend_from_slice(&len.to_be_bytes());
    m.extend_from_slice(&xid.to_be_bytes());
    m
}

fn packet_out(port: u32) -> Vec<u8> {
    let mut m = header(PACKET_OUT, 16, 0);
    m.extend_from_slice(&port.to_be_bytes());
    m.extend_from_slice(&[0; 4]);
    m
}

fn template_bytes(registry: &SchemaRegistry, name: &str) -> Vec<u8> {
    encode(&registry.get(name).expect("shipped schema").template()).expect("template encodes")
}

fn script_len(registry: &SchemaRegistry, script: &[&str]) -> usize {
    script
        .iter()
        .map(|n| registry.get(n).expect("shipped schema").total_bytes())
        .sum()
}

/// Byte range of the first `name` message in `script`.
fn slot(registry: &SchemaRegistry, script: &[&str], name: &str) -> Option<(usize, usize)> {
    let mut off = 0;
    for n in script {
        let len = registry.get(n).expect("shipped schema").total_bytes();
        if *n == name {
            return Some((off, off + len));
        }
        off += len;
    }
    None
}

#[derive(Clone)]
struct Shared {
    registry: Arc<SchemaRegistry>,
    oracle: FailureOracle,
    io_timeout: Duration,
}

/// Mock controller listening on loopback; one thread per connection.
pub struct SutServer {
    addr: SocketAddr,
    shared: Shared,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl SutServer {
    pub fn start(registry: Arc<SchemaRegistry>, oracle: FailureOracle) -> Result<Self, SutError> {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        let addr = listener.local_addr()?;
        let shared = Shared {
            registry,
            oracle,
            io_timeout: Duration::from_secs(10),
        };
        let stop = Arc::new(AtomicBool::new(false));
        let accept = {
            let shared = shared.clone();
            let stop = Arc::clone(&stop);
            std::thread::Builder::new()
                .name("sut-accept".into())
                .spawn(move || {
                    for conn in listener.incoming() {
                        if stop.load(Ordering::Acquire) {
                            break;
                        }
                        let Ok(conn) = conn else { continue };
                        let shared = shared.clone();
                        std::thread::spawn(move || {
                            if let Err(e) = serve_controller(conn, &shared) {
                                tracing::debug!("controller session ended with error: {e}");
                            }
                        });
                    }
                })?
        };
        Ok(Self {
            addr,
            shared,
            stop,
            accept: Some(accept),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn oracle(&self) -> &FailureOracle {
        &self.shared.oracle
    }

    /// A switch matched to this controller's procedure and oracle.
    pub fn switch(&self) -> MockSwitch {
        MockSwitch {
            registry: Arc::clone(&self.shared.registry),
            oracle: self.shared.oracle.clone(),
            io_timeout: self.shared.io_timeout,
        }
    }
}

impl Drop for SutServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve_controller(mut conn: TcpStream, shared: &Shared) -> Result<(), SutError> {
    conn.set_read_timeout(Some(shared.io_timeout))?;
    conn.set_write_timeout(Some(shared.io_timeout))?;
    conn.set_nodelay(true)?;
    let oracle = &shared.oracle;
    let reg = &shared.registry;
    let procedure = oracle.procedure;

    let mut opening = Vec::new();
    for name in procedure.controller_script() {
        opening.extend(template_bytes(reg, name));
    }
    conn.write_all(&opening)?;

    let mut inbound = Vec::new();
    conn.read_to_end(&mut inbound)?;

    let script = procedure.switch_script();
    let mut failure = false;
    if oracle.evaluated_by_controller() && inbound.len() == script_len(reg, script) {
        if let Some((a, b)) = slot(reg, script, &oracle.schema.type_name) {
            let msg = decode_as(&inbound[a..b], &oracle.schema)?;
            failure = oracle.is_failure(&msg, &inbound);
        }
    }

    if failure && oracle.failure_mode == FailureMode::SwitchDisconnect {
        conn.shutdown(Shutdown::Both)?;
        return Ok(());
    }
    let mut reply = Vec::new();
    if failure {
        for _ in 0..STORM_FLOODS {
            reply.extend(packet_out(FLOOD_PORT));
        }
    }
    match procedure {
        Procedure::PingExchange => reply.extend(packet_out(1)),
        Procedure::SwitchConnect => reply.extend(header(ECHO_REQUEST, 8, 0)),
    }
    conn.write_all(&reply)?;
    conn.shutdown(Shutdown::Write)?;
    Ok(())
}

/// Scripted switch; connects to the controller (usually via the proxy).
#[derive(Clone)]
pub struct MockSwitch {
    registry: Arc<SchemaRegistry>,
    oracle: FailureOracle,
    io_timeout: Duration,
}

impl MockSwitch {
    pub fn procedure(&self) -> Procedure {
        self.oracle.procedure
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.io_timeout = timeout;
        self
    }

    /// Runs the test procedure once. `nonce` becomes the switch hello's
    /// transaction id, which keys label noise per run.
    pub fn run_procedure(&self, endpoint: SocketAddr, nonce: u32) -> Result<RunOutcome, SutError> {
        let started = Instant::now();
        let reg = &self.registry;
        let procedure = self.oracle.procedure;
        let mut conn = TcpStream::connect_timeout(&endpoint, self.io_timeout)?;
        conn.set_read_timeout(Some(self.io_timeout))?;
        conn.set_write_timeout(Some(self.io_timeout))?;
        conn.set_nodelay(true)?;

        let opening_script = procedure.controller_script();
        let mut opening = vec![0u8; script_len(reg, opening_script)];
        conn.read_exact(&mut opening)?;

        let mut switch_failure = false;
        if !self.oracle.evaluated_by_controller() {
            if let Some((a, b)) = slot(reg, opening_script, &self.oracle.schema.type_name) {
                let msg = decode_as(&opening[a..b], &self.oracle.schema)?;
                let mut key = nonce.to_be_bytes().to_vec();
                key.extend_from_slice(&opening);
                switch_failure = self.oracle.is_failure(&msg, &key);
            }
        }

        let mut out = Vec::new();
        for name in procedure.switch_script() {
            let mut bytes = template_bytes(reg, name);
            if *name == "hello" {
                bytes[4..8].copy_from_slice(&nonce.to_be_bytes());
            }
            out.extend(bytes);
        }
        conn.write_all(&out)?;
        conn.shutdown(Shutdown::Write)?;

        let mut inbound = Vec::new();
        conn.read_to_end(&mut inbound)?;
        let mut obs = Observations {
            closed: true,
            ..Default::default()
        };
        let mut off = 0;
        while off + 8 <= inbound.len() {
            let len = (u16::from_be_bytes([inbound[off + 2], inbound[off + 3]]) as usize).max(8);
            let end = (off + len).min(inbound.len());
            let msg = &inbound[off..end];
            match (procedure, msg[1]) {
                (_, PACKET_OUT) if msg.len() >= 12 && msg[8..12] == FLOOD_PORT.to_be_bytes() => obs.floods += 1,
                (Procedure::PingExchange, PACKET_OUT) => obs.ping_ok = true,
                (Procedure::SwitchConnect, ECHO_REQUEST) => obs.ping_ok = true,
                _ => {}
            }
            off = end;
        }
        if switch_failure {
            match self.oracle.failure_mode {
                FailureMode::SwitchDisconnect => obs.ping_ok = false,
                FailureMode::BroadcastStorm => obs.floods += STORM_FLOODS,
            }
        }
        let (label, detail) = detect(obs);
        Ok(RunOutcome {
            label,
            detail,
            duration_ms: started.elapsed().as_millis() as u64,
            observations: obs,
        })
    }
}

//! Man-in-the-middle TCP relay that frames the control channel and hands
//! one selected message to a hook before forwarding it.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use sdnfuzz_core::codec::{peek_length, peek_type_code, Sender};
use sdnfuzz_core::SchemaRegistry;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("declared length {length} is shorter than the {HEADER_LEN}-byte header")]
    LengthFieldInvalid { length: u16 },
    #[error("upstream {addr} unreachable: {source}")]
    UpstreamUnreachable {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("target type `{0}` is not in the schema registry")]
    UnknownTarget(String),
    #[error("target ordinal must be at least 1")]
    BadOrdinal,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Incremental framing by the header's declared length.
#[derive(Debug, Default, Clone)]
pub struct Segmenter {
    buf: Vec<u8>,
}

impl Segmenter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `chunk` and returns every complete message now available.
    pub fn push(&mut self, chunk: &[u8]) -> Result<Vec<Vec<u8>>, ProxyError> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut start = 0;
        while let Some(len) = peek_length(&self.buf[start..]) {
            let len = len as usize;
            if len < HEADER_LEN {
                return Err(ProxyError::LengthFieldInvalid { length: len as u16 });
            }
            if self.buf.len() - start < len {
                break;
            }
            out.push(self.buf[start..start + len].to_vec());
            start += len;
        }
        self.buf.drain(..start);
        Ok(out)
    }

    pub fn residual(&self) -> &[u8] {
        &self.buf
    }

    pub fn take_residual(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.buf)
    }
}

/// Frames a complete buffer in one pass.
pub fn segment(bytes: &[u8]) -> Result<(Vec<Vec<u8>>, Vec<u8>), ProxyError> {
    let mut s = Segmenter::new();
    let msgs = s.push(bytes)?;
    Ok((msgs, s.take_residual()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SwitchToController,
    ControllerToSwitch,
}

impl From<Sender> for Direction {
    fn from(s: Sender) -> Self {
        match s {
            Sender::Switch => Direction::SwitchToController,
            Sender::Controller => Direction::ControllerToSwitch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptConfig {
    pub listen: SocketAddr,
    pub upstream: SocketAddr,
    pub target_type: String,
    /// Fuzz the k-th message of the target type on a connection.
    pub target_ordinal: u32,
    pub direction: Direction,
    #[serde(with = "millis")]
    pub io_timeout: Duration,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl InterceptConfig {
    /// Intercepts the first `target_type` message, in the direction its
    /// schema says it travels.
    pub fn new(upstream: SocketAddr, target_type: &str, registry: &SchemaRegistry) -> Result<Self, ProxyError> {
        let schema = registry
            .get(target_type)
            .ok_or_else(|| ProxyError::UnknownTarget(target_type.to_string()))?;
        Ok(Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 0)),
            upstream,
            target_type: target_type.to_string(),
            target_ordinal: 1,
            direction: schema.sender.into(),
            io_timeout: Duration::from_secs(10),
        })
    }
}

/// What happened on one relayed connection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: u64,
    pub target_seen: bool,
    pub hook_calls: u32,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub error: Option<String>,
}

static SESSION_IDS: AtomicU64 = AtomicU64::new(1);

pub struct Proxy {
    listener: TcpListener,
    config: InterceptConfig,
    target_code: u8,
}

#[derive(Default)]
struct PumpStats {
    bytes_in: u64,
    bytes_out: u64,
    hook_calls: u32,
    error: Option<String>,
}

impl Proxy {
    pub fn bind(config: InterceptConfig, registry: &SchemaRegistry) -> Result<Self, ProxyError> {
        if config.target_ordinal == 0 {
            return Err(ProxyError::BadOrdinal);
        }
        let target_code = registry
            .get(&config.target_type)
            .ok_or_else(|| ProxyError::UnknownTarget(config.target_type.clone()))?
            .header_type_code;
        let listener = TcpListener::bind(config.listen)?;
        Ok(Self {
            listener,
            config,
            target_code,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn config(&self) -> &InterceptConfig {
        &self.config
    }

    /// Accepts one connection and relays it to the upstream until both
    /// sides have closed.
    pub fn run_session<H>(&self, hook: H) -> SessionRecord
    where
        H: FnMut(&[u8]) -> Vec<u8> + Send,
    {
        let session_id = SESSION_IDS.fetch_add(1, Ordering::Relaxed);
        let record = match self.listener.accept() {
            Ok((client, _)) => self.relay(session_id, client, hook),
            Err(e) => SessionRecord {
                session_id,
                error: Some(e.to_string()),
                ..Default::default()
            },
        };
        log_record(&record);
        record
    }

    /// Handles `sessions` connections concurrently, each with a fresh hook.
    pub fn serve<F, H>(&self, sessions: usize, make_hook: F) -> Vec<SessionRecord>
    where
        F: Fn() -> H + Sync,
        H: FnMut(&[u8]) -> Vec<u8> + Send,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            for _ in 0..sessions {
                let session_id = SESSION_IDS.fetch_add(1, Ordering::Relaxed);
                let record = match self.listener.accept() {
                    Ok((client, _)) => {
                        let tx = tx.clone();
                        let hook = make_hook();
                        scope.spawn(move || {
                            let record = self.relay(session_id, client, hook);
                            log_record(&record);
                            let _ = tx.send(record);
                        });
                        continue;
                    }
                    Err(e) => SessionRecord {
                        session_id,
                        error: Some(e.to_string()),
                        ..Default::default()
                    },
                };
                log_record(&record);
                let _ = tx.send(record);
            }
        });
        drop(tx);
        let mut records: Vec<SessionRecord> = rx.into_iter().collect();
        records.sort_by_key(|r| r.session_id);
        records
    }

    fn relay<H>(&self, session_id: u64, client: TcpStream, hook: H) -> SessionRecord
    where
        H: FnMut(&[u8]) -> Vec<u8> + Send,
    {
        let mut record = SessionRecord {
            session_id,
            ..Default::default()
        };
        let upstream = match TcpStream::connect_timeout(&self.config.upstream, self.config.io_timeout) {
            Ok(s) => s,
            Err(source) => {
                let e = ProxyError::UpstreamUnreachable {
                    addr: self.config.upstream,
                    source,
                };
                record.error = Some(e.to_string());
                let _ = client.shutdown(Shutdown::Both);
                return record;
            }
        };
        let streams = (|| -> io::Result<_> {
            for s in [&client, &upstream] {
                s.set_read_timeout(Some(self.config.io_timeout))?;
                s.set_write_timeout(Some(self.config.io_timeout))?;
                s.set_nodelay(true)?;
            }
            Ok((client.try_clone()?, upstream.try_clone()?))
        })();
        let (client_w, upstream_w) = match streams {
            Ok(s) => s,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        let (up, down) = std::thread::scope(|scope| {
            let (hook_up, hook_down) = match self.config.direction {
                Direction::SwitchToController => (Some(hook), None),
                Direction::ControllerToSwitch => (None, Some(hook)),
            };
            let up = scope.spawn(|| self.pump(&client, &upstream_w, hook_up));
            let down = self.pump(&upstream, &client_w, hook_down);
            (up.join().unwrap_or_default(), down)
        });
        for stats in [&up, &down] {
            record.bytes_in += stats.bytes_in;
            record.bytes_out += stats.bytes_out;
            record.hook_calls += stats.hook_calls;
            if record.error.is_none() {
                record.error = stats.error.clone();
            }
        }
        record.target_seen = record.hook_calls > 0;
        record
    }

    /// Copies `src` to `dst` message by message, passing the selected
    /// target message through `hook`.
    fn pump<H>(&self, src: &TcpStream, dst: &TcpStream, mut hook: Option<H>) -> PumpStats
    where
        H: FnMut(&[u8]) -> Vec<u8>,
    {
        let mut stats = PumpStats::default();
        let mut seg = Segmenter::new();
        let mut seen = 0u32;
        let mut buf = [0u8; 4096];
        let mut src_r = src;
        let mut dst_w = dst;
        let result = (|| -> Result<(), ProxyError> {
            loop {
                let n = src_r.read(&mut buf)?;
                if n == 0 {
                    let rest = seg.take_residual();
                    dst_w.write_all(&rest)?;
                    stats.bytes_out += rest.len() as u64;
                    return Ok(());
                }
                stats.bytes_in += n as u64;
                for msg in seg.push(&buf[..n])? {
                    let mut out = msg;
                    if let Some(h) = hook.as_mut() {
                        if peek_type_code(&out) == Some(self.target_code) {
                            seen += 1;
                            if seen == self.config.target_ordinal {
                                out = h(&out);
                                stats.hook_calls += 1;
                            }
                        }
                    }
                    dst_w.write_all(&out)?;
                    stats.bytes_out += out.len() as u64;
                }
            }
        })();
        match result {
            Ok(()) => {
                let _ = dst.shutdown(Shutdown::Write);
            }
            Err(e) => {
                stats.error = Some(e.to_string());
                let _ = src.shutdown(Shutdown::Both);
                let _ = dst.shutdown(Shutdown::Both);
            }
        }
        stats
    }
}

fn log_record(record: &SessionRecord) {
    match serde_json::to_string(record) {
        Ok(json) => tracing::debug!(target: "sdnfuzz::session", "{json}"),
        Err(e) => tracing::warn!("cannot serialise session record: {e}"),
    }
}

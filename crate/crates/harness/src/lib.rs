//! Network side of the fuzzer: the intercepting proxy and a simulated
//! controller/switch pair with a planted failure oracle.

pub mod proxy;
pub mod sut;

pub use proxy::{segment, Direction, InterceptConfig, Proxy, ProxyError, Segmenter, SessionRecord};
pub use sut::{
    detect, FailureMode, FailureOracle, MockSwitch, Observations, OracleConfig, Procedure, RunOutcome, SutError,
    SutServer,
};

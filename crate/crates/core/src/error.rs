use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit error: {0}")]
    Unit(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unreclaimable: refill rate is zero")]
    Unreclaimable,
    #[error("request of {size} bytes exceeds total capacity of {capacity} bytes")]
    ExceedsCapacity { size: u64, capacity: u64 },
    #[error("over-free: client {client} frees {freed} bytes but uses {usage}")]
    OverFree { client: u32, freed: u64, usage: u64 },
    #[error("empty delay list")]
    EmptyDelays,
    #[error("zero-byte I/O task")]
    ZeroByteTask,
    #[error("negative latency sample")]
    NegativeLatency,
    #[error("trace error: {0}")]
    Trace(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

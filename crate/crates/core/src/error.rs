use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("retry stage {stage} exceeds retry limit {limit}")]
    InvalidStage { stage: u32, limit: u32 },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("contention window vector has {got} entries, expected {expected}")]
    CwLength { expected: usize, got: usize },

    #[error("contention window {value} of node {node} outside [{lo}, {hi}]")]
    CwOutOfBounds {
        node: usize,
        value: u32,
        lo: u32,
        hi: u32,
    },

    #[error("measurement window {window_us} us is shorter than one frame exchange ({exchange_us} us)")]
    WindowTooShort { window_us: f64, exchange_us: f64 },

    #[error("one-hop delay undefined: no successful packets")]
    UndefinedDelay,

    #[error("transmission probability undefined: node never reached a decision point")]
    UndefinedProbability,

    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("expected {expected} objective values, got {got}")]
    CountMismatch { expected: usize, got: usize },

    #[error("grid has {combinations} combinations, limit is {limit}")]
    GridTooLarge { combinations: u128, limit: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

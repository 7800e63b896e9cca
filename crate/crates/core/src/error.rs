use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid deployment needs a perfect-square AP count, got {0}")]
    NonSquareGrid(usize),

    #[error("perimeter deployment needs an AP count divisible by 4, got {0}")]
    PerimeterNotDivisible(usize),

    #[error("brute-force search over {assignments} pilot assignments exceeds the limit of {limit}")]
    InstanceTooLarge { assignments: f64, limit: u64 },

    #[error("orthogonality is undefined for a zero channel vector")]
    ZeroVector,

    #[error("no samples")]
    EmptySamples,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("receiver mismatch: measurements reference AP {first} and AP {second}")]
    MismatchedReceiver { first: usize, second: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("solver failed in {stage} after {iterations} iterations (gap {gap:.3e}, target {target:.6e}): {reason}")]
    Solver { stage: &'static str, iterations: usize, gap: f64, target: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

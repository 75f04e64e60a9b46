use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("element index ({m}, {n}) outside a {rows}x{cols} array")]
    IndexOutOfRange {
        m: usize,
        n: usize,
        rows: usize,
        cols: usize,
    },

    #[error("operation requires a cylindrical array")]
    NotCylindrical,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid subarray: {0}")]
    InvalidSubarray(String),

    #[error("weight vector has zero norm over its support")]
    ZeroNormWeights,

    #[error("layer ({m_s}, {n_s}) not realizable: {reason}")]
    LayerNotRealizable {
        m_s: usize,
        n_s: usize,
        reason: String,
    },

    #[error("layer ({0}, {1}) not present in codebook")]
    MissingLayer(usize, usize),

    #[error("link distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("coincident UAV positions")]
    CoincidentPositions,

    #[error("partition infeasible: {users} conflicting users share {rows} z-rows")]
    InfeasiblePartition { users: usize, rows: usize },

    #[error("conflict resolution did not converge within {0} iterations")]
    ConflictLoop(usize),

    #[error("gaussian process: {0}")]
    Gp(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("at slot {slot}: {source}")]
    AtSlot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid occupation: {0}")]
    InvalidOccupation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("state mixes photon-number sectors {0:?}")]
    MixedSector(Vec<usize>),

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid mode set: {0}")]
    InvalidModeSet(String),

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("operator norm {norm} exceeds 1")]
    NormTooLarge { norm: f64 },

    #[error("state is not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("outcome has probability {probability:.3e}")]
    ImpossibleOutcome { probability: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("derivation failed: {0}")]
    DerivationFailed(String),

    #[error("no decomposition convention matched (best fidelity {best_fidelity})")]
    DecompositionMismatch { best_fidelity: f64 },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

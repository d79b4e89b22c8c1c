use thiserror::Error;

/// Errors produced by the simulation and optimization routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid atom number: {0}")]
    InvalidAtomNumber(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative dephasing exposure: {0}")]
    NegativeExposure(f64),

    #[error("memory cap exceeded: {0}")]
    MemoryCap(String),

    #[error("asymptotic regime not reached: z = {0} must exceed e")]
    AsymptoticsInvalid(f64),

    #[error("protocol unusable in servo loop: {0}")]
    UnusableProtocol(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported figure: {0}")]
    UnsupportedFigure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error JSON and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidAtomNumber(_) => "invalid_atom_number",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotHermitian(_) => "not_hermitian",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NegativeExposure(_) => "negative_exposure",
            Error::MemoryCap(_) => "memory_cap",
            Error::AsymptoticsInvalid(_) => "asymptotics_invalid",
            Error::UnusableProtocol(_) => "unusable_protocol",
            Error::OptimizationFailed(_) => "optimization_failed",
            Error::Config(_) => "config",
            Error::UnsupportedFigure(_) => "unsupported_figure",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

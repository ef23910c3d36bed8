use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("order statistic index k={k} out of range for n={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("estimator undefined: {0}")]
    UndefinedEstimator(String),

    #[error("extrapolation requires p <= k/n, got p={p} with k/n={limit}")]
    ExtrapolationDirection { p: f64, limit: f64 },

    #[error("root not bracketed in [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("insufficient exceedances: found {found}, need at least {required}")]
    InsufficientExceedances { found: usize, required: usize },

    #[error("zero exceedances at level {0}")]
    ZeroExceedances(f64),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("length mismatch: {what} has {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },

    #[error("{failed} of {total} replications failed, exceeding the 5% budget")]
    ReplicationBudget { failed: usize, total: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used on the CLI diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::KOutOfRange { .. } => "k_out_of_range",
            Error::UndefinedEstimator(_) => "undefined_estimator",
            Error::ExtrapolationDirection { .. } => "extrapolation_direction",
            Error::RootNotBracketed { .. } => "root_not_bracketed",
            Error::InsufficientExceedances { .. } => "insufficient_exceedances",
            Error::ZeroExceedances(_) => "zero_exceedances",
            Error::OutOfRegime(_) => "out_of_regime",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::UnknownName { .. } => "unknown_name",
            Error::ReplicationBudget { .. } => "replication_budget",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by a malformed or rejected configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::UnknownName { .. }
                | Error::Json(_)
                | Error::LengthMismatch { .. }
                | Error::OutOfRegime(_)
        )
    }
}

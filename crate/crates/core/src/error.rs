use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("log Z(mu={mu}, nu={nu}) did not converge within {max_terms} terms")]
    NormalizerNotConverged { mu: f64, nu: f64, max_terms: usize },

    #[error("rejection sampler for COM-Poisson(mu={mu}, nu={nu}) made {attempts} attempts without acceptance")]
    SamplerStalled { mu: f64, nu: f64, attempts: u64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("inconsistent sampler state: {0}")]
    InconsistentState(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line driver, one per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config(_) => 2,
            Error::Parse { .. } | Error::MissingColumn(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Io(_) => 4,
            Error::NormalizerNotConverged { .. } | Error::SamplerStalled { .. } => 5,
            Error::LengthMismatch { .. } | Error::RankDeficient | Error::InconsistentState(_) => 6,
        }
    }
}

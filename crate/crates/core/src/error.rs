use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("policy contract violated: {0}")]
    ContractViolation(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed record: {0}")]
    MalformedRecord(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Calibration(_) => "calibration_failure",
            Error::ContractViolation(_) => "contract_violation",
            Error::EmptyDataset => "empty_dataset",
            Error::MalformedRecord(_) => "malformed_record",
            Error::Initialization(_) => "initialization",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

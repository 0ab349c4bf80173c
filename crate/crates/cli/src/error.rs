use kfm_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Numeric(CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl From<CoreError> for CliError {
    /// Errors caused by the inputs count as configuration errors.
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        match e {
            PointOutsideDomain
            | InvalidDomain(_)
            | DimensionMismatch { .. }
            | TruncationRadiusExceeded { .. }
            | BasisDomainMismatch(_)
            | UnsupportedKind(_)
            | DimensionNotOne(_)
            | VectorNotTangential(_)
            | TrivialClass
            | ContainmentViolated
            | ResolutionTooCoarse { .. }
            | OrderExceedsSupported(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

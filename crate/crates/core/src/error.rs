use thiserror::Error;

pub type Result<T, E = AfnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AfnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite coordinate at point {point}, coordinate {coord}")]
    NonFinite { point: usize, coord: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("attack infeasible: {0}")]
    AttackInfeasible(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AfnError {
    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(AfnError::DimensionMismatch { expected, got })
        }
    }
}

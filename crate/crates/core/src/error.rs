use thiserror::Error;

/// Errors produced by the numerical kernels and model code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be nonsingular has an eigenvalue below the floor.
    #[error("near-singular matrix: eigenvalue {eigenvalue:e} is below the floor {floor:e}")]
    NearSingular { eigenvalue: f64, floor: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("training diverged at epoch {epoch}: loss {loss:e}")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NearSingular { .. } | Error::Numeric(_) | Error::TrainingDiverged { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            actual,
            context,
        })
    }
}

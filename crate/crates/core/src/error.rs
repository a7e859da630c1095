use thiserror::Error;

/// Errors raised by the simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlmError {
    #[error("age {age} outside mortality table range [{min}, {max}]")]
    AgeOutOfRange { age: u32, min: u32, max: u32 },

    #[error("invalid mortality table: {0}")]
    InvalidTable(String),

    #[error("portfolio is empty")]
    EmptyPortfolio,

    #[error("Macaulay duration is undefined for an all-zero cash-flow schedule")]
    UndefinedDuration,

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("scenario horizon {scenario} years is shorter than the flow horizon {flows}")]
    HorizonMismatch { scenario: usize, flows: usize },

    #[error("indexation requested but no inflation parameters supplied")]
    MissingInflation,

    #[error("allocation grid is empty")]
    EmptyGrid,

    #[error("estimator needs {needed} in dimension {dim}, got {got}")]
    DegenerateSample {
        dim: &'static str,
        needed: usize,
        got: usize,
    },
}

impl AlmError {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        AlmError::InvalidParam {
            field,
            reason: reason.into(),
        }
    }
}

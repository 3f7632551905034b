use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} out of range for {m} components")]
    LabelOutOfRange { label: usize, m: usize },
    #[error("problem too large for exact evaluation: {0}")]
    TooLarge(String),
    #[error("infeasible partition family: {0}")]
    Infeasible(String),
    #[error("non-finite log-likelihood in view {view}, subject {subject}, component {component}")]
    NonFiniteLikelihood {
        view: usize,
        subject: usize,
        component: usize,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

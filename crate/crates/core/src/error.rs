use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad sizes, indices, parameters).
    #[error("domain error: {0}")]
    Domain(alloc::string::String),
    /// Two inputs disagree in shape.
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// Test and library were featured with different configurations.
    #[error("feature configuration mismatch between test image and library entry {entry}")]
    FeatureConfigMismatch { entry: usize },
    #[error("library is empty")]
    EmptyLibrary,
    #[error("library entry {0} carries no superpixel labels")]
    UnlabeledEntry(usize),
    /// An α-expansion move produced a non-submodular pairwise term.
    #[error("pairwise term on edge ({0}, {1}) is not submodular")]
    NotSubmodular(usize, usize),
}

pub(crate) fn domain(msg: impl Into<alloc::string::String>) -> Error {
    Error::Domain(msg.into())
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not antisymmetric (max deviation {0:e})")]
    NotAntisymmetric(f64),

    #[error("correlation matrix spectrum out of range (largest canonical value {0})")]
    InvalidSpectrum(f64),

    #[error("determinant {0:e} is negative beyond tolerance")]
    NegativeDeterminant(f64),

    #[error("matrix is numerically singular: {0}")]
    Singular(&'static str),

    #[error("states are orthogonal")]
    Orthogonal,

    #[error("neither state is pure")]
    NotPure,

    #[error("eigenvalue {0:e} of K1 K2 is negative; inputs have modes at +-1")]
    UnitModeContamination(f64),

    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("{what} = {value} is out of range")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("{what} = {value} exceeds the limit {limit}")]
    GuardExceeded {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },

    #[error("eigenvalue solver did not converge")]
    NoConvergence,

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    /// True for errors caused by a size guard rather than invalid input.
    pub fn is_guard(&self) -> bool {
        matches!(self, Error::GuardExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

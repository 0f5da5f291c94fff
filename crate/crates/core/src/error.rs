use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by model validation, analytics, simulation and inversion.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unstable model: mean drift {drift} is not negative")]
    Unstable { drift: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parameter {theta} lies left of the branch point {branch}")]
    BranchCut { theta: f64, branch: f64 },

    #[error(
        "repeated eigenvalue near {value}: expansions with polynomial-exponential \
         terms (non-simple eigenvalues) are not implemented"
    )]
    RepeatedEigenvalue { value: Complex64 },

    #[error("evaluation at a pole {at}; poles are {poles:?}")]
    Pole { at: Complex64, poles: Vec<Complex64> },

    #[error("singular or reducible generator: {0}")]
    SingularGenerator(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("grid error: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

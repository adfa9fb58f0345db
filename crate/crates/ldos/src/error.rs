use thiserror::Error;

/// Error type shared across the library.
#[derive(Debug, Error)]
pub enum LdosError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not unitary: max |U\u{2020}U - I| = {0:.3e}")]
    NotUnitary(f64),

    #[error("matrix is not Hermitian: max |A - A\u{2020}| = {0:.3e}")]
    NotHermitian(f64),

    #[error("numerical failure in {context}: worst residual {residual:.3e}")]
    NumericalFailure { context: String, residual: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("band {0} holds no eigenphases")]
    EmptyBand(usize),

    #[error("hypotheses are indistinguishable (lambda = 1): required sample size unbounded")]
    Indistinguishable,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LdosError>;

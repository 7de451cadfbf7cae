use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid Levy triplet: {0}")]
    InvalidTriplet(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unstable coefficient matrix at u={u}: max Re(eigenvalue) = {max_real}")]
    Unstable { u: f64, max_real: f64 },

    #[error("singular coefficient matrix at u={0}")]
    Singular(f64),

    #[error("Peano-Baker series did not converge: |I_{order}| = {last_norm:e} exceeds 1e-8 * |partial sum| = {sum_norm:e}")]
    NotConverged {
        order: usize,
        last_norm: f64,
        sum_norm: f64,
    },

    #[error("observation scheme rejected: {0}")]
    Scheme(String),

    #[error("grid mismatch at index {index}: expected time {expected}, found {found}")]
    GridMismatch {
        index: usize,
        expected: f64,
        found: f64,
    },

    #[error("missing sample at time {0}")]
    MissingSample(f64),

    #[error("driver is not centered (mu_L = {0}); set gamma so that E[L(1)] = 0")]
    NotCentered(f64),

    #[error("kernel rejected: {0}")]
    Kernel(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

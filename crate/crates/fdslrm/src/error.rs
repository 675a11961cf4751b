use thiserror::Error;

/// Errors produced by model construction, design realization and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The combined design matrix [F V] does not have full column rank.
    #[error("design matrix [F V] is rank deficient (sigma_min/sigma_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    /// A random-component column is numerically zero.
    #[error("random-component column {index} has near-zero norm")]
    DegenerateColumn { index: usize },

    /// The requested operation is defined for orthogonal designs only.
    #[error("operation requires an orthogonal design (F'V = 0 and V'V diagonal)")]
    NotOrthogonal,

    /// Identifiability requires strictly more observations than parameters.
    #[error("model needs n > k + l observations (n = {n}, k = {k}, l = {l})")]
    TooFewObservations { n: usize, k: usize, l: usize },

    /// Input series has the wrong length for the model.
    #[error("series length {actual} does not match model length {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    /// Input series is too short for the operation.
    #[error("series of length {actual} is too short (need at least {min})")]
    SeriesTooShort { min: usize, actual: usize },

    /// A term specification violates its frequency or power constraints.
    #[error("invalid model term: {0}")]
    InvalidTerm(String),

    /// A variance-component vector violates nu_0 > 0 or nu_j >= 0.
    #[error("invalid variance components: {0}")]
    InvalidVariance(String),

    /// A dual-variable vector violates d_0 > d_j * |v_j|^2 or d_j >= 0.
    #[error("invalid dual variables: {0}")]
    InvalidDual(String),

    /// A covariance evaluation was requested at parameters that do not
    /// yield a positive definite matrix.
    #[error("covariance matrix is not positive definite")]
    NonPositiveDefinite,

    /// A linear system that should be regular turned out singular.
    #[error("linear system is singular")]
    SingularSystem,

    /// Generic invalid argument.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Error`]. Variants are
//! grouped by what went wrong rather than by module, since several failure
//! kinds (singular matrices, domain violations) can surface from more than
//! one place.

/// Errors produced by model construction, the covariance recursion, bound
/// evaluation, the enumeration oracle, and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation
    /// (non-PSD covariance, nonpositive variance, scale below one, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in dimension do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A sensor index fell outside `0..m`.
    #[error("sensor index {index} out of range for {len} sensors")]
    IndexOutOfRange { index: usize, len: usize },

    /// The measurement direction carries no usable information: the pivot
    /// `c' P c` is at or below the relative threshold.
    #[error("singular pivot: c'Pc = {pivot:.3e} is below threshold {threshold:.3e}")]
    SingularPivot { pivot: f64, threshold: f64 },

    /// A matrix that must be invertible is singular or too ill-conditioned
    /// to invert reliably.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// The low-rank reducer was handed a matrix of full numerical rank.
    #[error("matrix has full rank {rank}; nothing to reduce")]
    FullRank { rank: usize },

    /// A bound ratio is undefined because its denominator vanishes.
    #[error("degenerate bound: {0}")]
    DegenerateBound(String),

    /// Exhaustive enumeration would exceed the configured work budget.
    #[error("enumeration budget exceeded: {schedules:.3e} schedules > {budget:.3e}")]
    BudgetExceeded { schedules: u64, budget: u64 },

    /// The experiment configuration failed to parse or validate.
    #[error("config error: {0}")]
    Config(String),

    /// A failure during trajectory simulation, tagged with the slot at
    /// which it occurred.
    #[error("slot {t}: {source}")]
    Step {
        t: u64,
        #[source]
        source: Box<Error>,
    },

    /// An underlying filesystem operation failed.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A CSV file could not be written or parsed.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("singular initial design: achieved rank {achieved} < required {required}")]
    SingularInit { achieved: usize, required: usize },

    #[error("singular rank-one update: denominator {0:e} is numerically zero")]
    SingularUpdate(f64),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("budget {budget} exceeds feasible set size {feasible}")]
    BudgetExceedsFeasible { budget: usize, feasible: usize },

    #[error("kernel matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("random selection failed to reach rank {rank} after {retries} draws")]
    RetriesExhausted { rank: usize, retries: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

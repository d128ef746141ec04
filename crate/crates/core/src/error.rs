use thiserror::Error;

pub type Result<T> = std::result::Result<T, WgomError>;

#[derive(Debug, Error)]
pub enum WgomError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix has fewer numerically nonzero singular values (or SP
    /// directions) than the requested number of classes.
    #[error("degenerate rank: {0}")]
    DegenerateRank(String),

    /// The input has more than `k` significant singular values where an
    /// exact rank-`k` matrix was required.
    #[error("rank mismatch: {0}")]
    RankMismatch(String),

    #[error("invalid membership matrix: {0}")]
    InvalidMembership(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mean {mean} at entry ({row}, {col}) is outside the admissible range {range} of {distribution}")]
    MeanOutOfRange {
        row: usize,
        col: usize,
        mean: f64,
        range: String,
        distribution: String,
    },

    #[error("infeasible discrete scheme: {0}")]
    InfeasibleScheme(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WgomError {
    /// True for failures caused by the numerical content of a matrix rather
    /// than its shape or encoding.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            WgomError::DegenerateRank(_) | WgomError::RankMismatch(_)
        )
    }
}

impl From<csv::Error> for WgomError {
    fn from(err: csv::Error) -> Self {
        WgomError::Parse(err.to_string())
    }
}

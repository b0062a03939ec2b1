use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every domain failure the library reports. [`Error::code`] gives a stable
/// machine-readable name for each variant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // correlation matrices and data
    #[error("matrix is not square ({rows} rows, row {row} has {cols} entries)")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("matrix is not symmetric: |m[{i}][{j}] - m[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("diagonal entry {i} is {value}, expected 1")]
    DiagonalNotUnit { i: usize, value: f64 },
    #[error("entry [{i}][{j}] = {value} lies outside [-1, 1]")]
    EntryOutOfRange { i: usize, j: usize, value: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector {index} has norm {norm}, expected 1")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("column `{0}` has zero variance")]
    ZeroVarianceColumn(String),
    #[error("need at least 2 rows, found {0}")]
    TooFewRows(usize),
    #[error("bad dimension: {0}")]
    BadDimension(String),
    #[error("malformed input: {0}")]
    Parse(String),

    // DAGs
    #[error("node {parent} is listed as a parent of node {child} but is not earlier")]
    ParentNotEarlier { child: usize, parent: usize },
    #[error("node 1 must be ancestral but has parents {0:?}")]
    AncestralViolation(Vec<usize>),
    #[error("node {node} is outside 1..={n}")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("DAG is not perfect: parents {a} and {b} of node {child} are unlinked")]
    NotPerfect { child: usize, a: usize, b: usize },
    #[error("bad size: {0}")]
    BadSize(String),
    #[error("nodes 1 and {n} are not connected in the skeleton")]
    Disconnected { n: usize },

    // estimation
    #[error("parent block of node {node} is singular (smallest singular value {sigma_min:e})")]
    SingularParentBlock { node: usize, sigma_min: f64 },
    #[error("estimated variance of node {node} is degenerate ({value:e})")]
    DegenerateVariance { node: usize, value: f64 },
    #[error("collapsed chain variable z_{k} has degenerate variance {value:e}")]
    DegenerateCollapse { k: usize, value: f64 },

    // bounds and optimization
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error("delta = {0} must satisfy |delta| <= 1 - 1e-6")]
    DeltaOutOfRange(f64),
    #[error("angle {0} must lie in [0, pi]")]
    BadAngle(f64),
    #[error("target correlation {0} is infeasible")]
    InfeasibleR(f64),

    // binary environment
    #[error("conditioning event for variable {var} has probability {prob:e}")]
    DegenerateConditioning { var: usize, prob: f64 },
    #[error("n = {n} exceeds the enumeration limit {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("invalid binary joint: {0}")]
    InvalidJoint(String),

    // search
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("pool of {pool} variables cannot fill {needed} chain slots")]
    PoolTooSmall { pool: usize, needed: usize },
    #[error("exhaustive search would evaluate {count} chains (limit {limit})")]
    BudgetExceeded { count: u128, limit: u128 },
    #[error("invalid pool specification: {0}")]
    BadPool(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotSquare { .. } => "not_square",
            Error::NotSymmetric { .. } => "not_symmetric",
            Error::DiagonalNotUnit { .. } => "diagonal_not_unit",
            Error::EntryOutOfRange { .. } => "entry_out_of_range",
            Error::NotPsd { .. } => "not_psd",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotUnitNorm { .. } => "not_unit_norm",
            Error::ZeroVarianceColumn(_) => "zero_variance_column",
            Error::TooFewRows(_) => "too_few_rows",
            Error::BadDimension(_) => "bad_dimension",
            Error::Parse(_) => "parse_error",
            Error::ParentNotEarlier { .. } => "parent_not_earlier",
            Error::AncestralViolation(_) => "ancestral_violation",
            Error::NodeOutOfRange { .. } => "node_out_of_range",
            Error::NotPerfect { .. } => "not_perfect",
            Error::BadSize(_) => "bad_size",
            Error::Disconnected { .. } => "disconnected",
            Error::SingularParentBlock { .. } => "singular_parent_block",
            Error::DegenerateVariance { .. } => "degenerate_variance",
            Error::DegenerateCollapse { .. } => "degenerate_collapse",
            Error::BadArguments(_) => "bad_arguments",
            Error::DeltaOutOfRange(_) => "delta_out_of_range",
            Error::BadAngle(_) => "bad_angle",
            Error::InfeasibleR(_) => "infeasible_r",
            Error::DegenerateConditioning { .. } => "degenerate_conditioning",
            Error::TooLarge { .. } => "too_large",
            Error::InvalidJoint(_) => "invalid_joint",
            Error::EmptyPool => "empty_pool",
            Error::PoolTooSmall { .. } => "pool_too_small",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::BadPool(_) => "bad_pool",
            Error::Io(_) => "io_failure",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("cannot parse value in row {row}, column `{column}`")]
    ParseError { row: usize, column: String },
    #[error("non-finite value in row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("column `{name}` has length {len}, expected {expected}")]
    LengthMismatch { name: String, len: usize, expected: usize },
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("column `{0}` is not a factor")]
    NotFactor(String),
    #[error("factor `{0}` has fewer than two observed levels")]
    DegenerateFactor(String),

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("missing covariate `{0}`")]
    MissingCovariate(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("underdetermined fit: n = {n} observations for p = {p} columns")]
    Underdetermined { n: usize, p: usize },
    #[error("design matrix is rank deficient (rank {rank} of {p})")]
    SingularDesign { rank: usize, p: usize },
    #[error("two-way table has an empty cell ({0})")]
    EmptyCell(String),

    #[error("covariate has {distinct} distinct values, basis rank {k} needs at least {k}")]
    TooFewDistinctValues { distinct: usize, k: usize },
    #[error("basis rank {0} is below the minimum of 3")]
    RankTooSmall(usize),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("cannot double basis rank {k}: only {n} observations")]
    CannotDouble { k: usize, n: usize },

    #[error("interaction `{0}` references a covariate that is not in the main-effects model")]
    InteractionNotCovered(String),
    #[error("a study needs at least one iteration")]
    EmptyStudy,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Non-fatal conditions reported alongside a result.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    RankDeficient { rank: usize, p: usize },
    Boundary { block: String, log10_lambda: f64 },
    NonConvergence { iterations: usize },
    TooFewIterations { iterations: usize },
    FailedIterations { count: usize },
}

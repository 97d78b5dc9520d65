use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("neighbor index {index} out of range (degree {degree})")]
    IndexOutOfRange { index: usize, degree: usize },
    #[error("relation is empty")]
    EmptyRelation,
    #[error("total weight is zero")]
    ZeroWeight,
    #[error("sampler universe exhausted")]
    Exhausted,
    #[error("tuple does not match schema: {0}")]
    SchemaMismatch(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("the full join is empty")]
    EmptyJoin,
    #[error("query shape not supported here: {0}")]
    ShapeUnsupported(String),
    #[error("query is not acyclic")]
    NotAcyclic,
    #[error("materialization guard exceeded ({0} intermediate tuples)")]
    SizeGuard(u64),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid instance: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("sampler produced a tuple outside the result set: {0}")]
    OutOfSet(String),
    #[error("degree table underestimates too often; rebuild required")]
    TableTooLow,
}

pub type Result<T> = std::result::Result<T, Error>;

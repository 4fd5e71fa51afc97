use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("relation set {0} is disconnected under the query predicates")]
    Disconnected(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("assignment has length {got}, qubo has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },

    #[error("query has {relations} relations, oracle limit is {limit}")]
    OracleLimit { relations: usize, limit: usize },

    #[error("qubo has {n} variables, exhaustive limit is {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("embedding failed: {0}")]
    Embedding(String),

    #[error("partitioning failed: {0}")]
    Partition(String),

    #[error("hint parse error at byte {pos}: {msg}")]
    Hint { pos: usize, msg: String },

    #[error("unknown query `{0}`")]
    UnknownQuery(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

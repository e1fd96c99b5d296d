use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("missing field {0}")]
    MissingField(&'static str),

    #[error("malformed instance document: {0}")]
    Malformed(String),

    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),

    #[error("scale too large for exact oracle: {needed} evaluations exceed cap {cap}")]
    ScaleTooLarge { needed: u128, cap: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("lp parse error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },
}

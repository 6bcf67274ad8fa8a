use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite score for document `{doc_id}`")]
    NonFiniteScore { doc_id: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("record type `{0}` not present in fusion model")]
    UnknownRecordType(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("optimizer diverged: {0}")]
    Diverged(String),

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

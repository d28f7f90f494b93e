use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value produced at node {node}")]
    NonFinite { node: usize },
    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("posterior undefined: goal is unreachable under the policy")]
    UndefinedPosterior,
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error("support enumeration refused: {codes} codes exceed limit {limit}")]
    SupportTooLarge { codes: u128, limit: u128 },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

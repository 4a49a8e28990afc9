use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),
    /// A learner could not be fit (for example a single class label).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    /// A representation carries no usable signal (for example all dims pruned).
    #[error("degenerate representation: {0}")]
    DegenerateRepresentation(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("score {name} = {value} lies outside [0, 1] beyond the clamp tolerance")]
    OutOfRange { name: String, value: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

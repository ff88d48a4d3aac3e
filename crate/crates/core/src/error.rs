use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A grid is too coarse for the structure it has to resolve.
    #[error("resolution error: {what} is {value:e}, must be at most {bound:e}")]
    Resolution {
        what: String,
        value: f64,
        bound: f64,
    },

    #[error("level crossing: gap {gap:e} at t = {time} is below tolerance {tolerance:e}")]
    Degeneracy { time: f64, gap: f64, tolerance: f64 },

    #[error("adiabaticity violated: {0}")]
    Adiabaticity(String),

    #[error("resource bound exceeded: {requested} > {limit} ({what})")]
    Resource {
        what: String,
        requested: u64,
        limit: u64,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

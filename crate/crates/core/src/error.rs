use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no events: every mortality record is censored")]
    NoEvents,

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Quadrature { requested: f64, achieved: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::NoEvents
                | Error::InsufficientData(_)
        )
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

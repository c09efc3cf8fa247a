use thiserror::Error;

/// Errors raised by the library. The CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite velocity for particle {index} at t={t}: ({dc}, {dh})")]
    NonFiniteVelocity { index: usize, t: f64, dc: f64, dh: f64 },

    #[error("precondition failed: {what} (|drift| = {drift:e})")]
    NotStationary { what: String, drift: f64 },

    #[error("covariance lost positive semidefiniteness at t={t}: min eigenvalue {min_eig:e}")]
    Covariance { t: f64, min_eig: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that come from the numerics rather than from the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteVelocity { .. }
                | Error::Covariance { .. }
                | Error::Numerical(_)
                | Error::NotStationary { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// The split mirrors how callers should react: `Config`, `Domain`, and
/// `Precondition` are caller mistakes (validation failures); the remaining
/// variants are numerical conditions detected while running an estimator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (dimension, curvature sign, exponent
    /// range, malformed descriptor).
    #[error("config: {0}")]
    Config(String),

    /// A point or argument lies outside the chart or domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// A stated precondition of an operation does not hold for the inputs.
    #[error("precondition: {0}")]
    Precondition(String),

    /// A sampling or iteration budget ran out before the target quality was
    /// reached. Carries the best quality figure achieved (e.g. covering
    /// fraction) for diagnosis.
    #[error("budget exhausted: {msg} (achieved {achieved})")]
    Budget { msg: String, achieved: f64 },

    /// An estimator could not produce a usable value (empty shell, empty
    /// level set, denominator consistent with zero).
    #[error("estimation: {0}")]
    Estimation(String),

    /// Non-finite data encountered where a finite value is required.
    #[error("data: {0}")]
    Data(String),

    /// Numerical failure inside an algorithm (divergence, stagnation,
    /// non-convergent quadrature).
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that indicate invalid input rather than a numerical
    /// condition; the command line maps these to exit code 1, the rest to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Precondition(_) | Error::Io(_) | Error::Json(_)
        )
    }
}

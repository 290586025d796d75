use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Power iteration did not settle; `best_bound` is the inflated estimate
    /// reached before giving up.
    #[error("spectral estimation did not converge after {iters} iterations (best bound {best_bound})")]
    Estimation { iters: usize, best_bound: f64 },

    #[error("problem generation failed: {0}")]
    Generation(String),

    #[error("reference oracle failed: {0}")]
    Oracle(String),

    #[error("verification failed at iteration {iteration}: {detail}")]
    Verification { iteration: usize, detail: String },

    #[error("momentum schedule exhausted at index {0}")]
    ScheduleExhausted(usize),

    #[error("insufficient data for rate fit: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            got,
        }
    }
}

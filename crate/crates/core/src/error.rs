use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Config` and `Data` map to distinct CLI exit codes (2 and 3); everything
/// else is an ordinary failure.
#[derive(Error, Debug)]
pub enum PlabError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("input error: {0}")]
    Input(String),

    /// Non-finite numbers appeared during an optimization or evaluation step.
    /// Carries enough context to locate the step in the instability studies.
    #[error("diverged at step {step}: loss={loss}, grad_norm={grad_norm} ({context})")]
    Diverged {
        step: u64,
        loss: f64,
        grad_norm: f64,
        context: String,
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("missing metric: {0}")]
    MissingMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PlabError>;

impl PlabError {
    pub fn diverged(step: u64, loss: f64, grad_norm: f64, context: impl Into<String>) -> Self {
        PlabError::Diverged {
            step,
            loss,
            grad_norm,
            context: context.into(),
        }
    }
}

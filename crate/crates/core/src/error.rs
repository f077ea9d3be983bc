use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("item {0} carries no length attribute")]
    MissingLength(usize),

    #[error("unknown token {token} (vocabulary size {vocab})")]
    UnknownToken { token: usize, vocab: usize },

    #[error("training aborted: {0}")]
    Diverged(Box<TrainDiagnostic>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// State captured when a training run is aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainDiagnostic {
    pub step: usize,
    pub reason: String,
    pub loss: f64,
    pub initial_loss: f64,
    pub last_finite_loss: Option<f64>,
    pub grad_norm: f64,
    pub param_norm: f64,
}

impl fmt::Display for TrainDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {} (loss {}, initial {}, last finite {:?}, |grad| {}, |params| {})",
            self.reason,
            self.step,
            self.loss,
            self.initial_loss,
            self.last_finite_loss,
            self.grad_norm,
            self.param_norm
        )
    }
}

pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} = {value}")))
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] prefdens::Error),

    #[error("unknown experiment `{0}`; run `prefdens list` for the registry")]
    UnknownExperiment(String),

    #[error("experiment `{experiment}` has no parameter `{key}`")]
    UnknownParameter { experiment: String, key: String },

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("config file: {0}")]
    ConfigFile(String),

    #[error("malformed output {file}: {reason}")]
    Output { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

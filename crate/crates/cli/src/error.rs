use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("ExperimentError: {0}")]
    Experiment(String),
    #[error("{0}")]
    Compute(#[from] calderon_core::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

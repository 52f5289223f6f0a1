use scns_harness::HarnessError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Errors carry the module they come from as a prefix.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {path}{}: {key}: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Config {
        path: String,
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error("{module}: {path}:{line}: {message}")]
    Parse {
        module: &'static str,
        path: String,
        line: usize,
        message: String,
    },
    #[error("embeddings: {path}: tokens not found: {}", tokens.join(", "))]
    MissingTokens { path: String, tokens: Vec<String> },
    #[error("{module}: {message}")]
    Invalid {
        module: &'static str,
        message: String,
    },
    #[error("harness: {0}")]
    Harness(#[from] HarnessError),
    #[error("core: {0}")]
    Core(#[from] scns_core::Error),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

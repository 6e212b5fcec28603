use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}: {msg}")]
    Config { origin: String, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Numerical(#[from] lmem::Error),
    #[error("tolerance not met: {0}")]
    Tolerance(String),
}

impl CliError {
    /// 1 for validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) | CliError::Io { .. } => 1,
            CliError::Numerical(lmem::Error::InvalidParameter(_) | lmem::Error::GridTooCoarse { .. }) => 1,
            CliError::Numerical(_) | CliError::Tolerance(_) => 2,
        }
    }
}

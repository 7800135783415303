use std::path::{Path, PathBuf};

use robust_consensus::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 configuration, 3 numerical failure, 4 infeasible certificate, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidParams(_) | Error::Config(_) | Error::DegenerateBound(_) | Error::EmptyInput => 2,
                Error::NonConvergence { .. } | Error::UnstableSystem(_) | Error::SingularMiddleBlock => 3,
                Error::InfeasibleGamma { .. } => 4,
            },
            CliError::Io { .. } => 1,
        }
    }
}

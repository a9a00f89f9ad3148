use std::io;
use std::path::PathBuf;

use snf_core::codec::DecodeError;

use crate::config::ConfigError;
use crate::pnm::PnmError;

pub type Result<T, E = SnfError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SnfError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("training diverged at stage {stage}, epoch {epoch} (loss {loss})")]
    Diverged { stage: usize, epoch: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("network: {0}")]
    Net(#[source] io::Error),
    #[error("{path}: {source}")]
    Pnm { path: PathBuf, source: PnmError },
    #[error("stream decode failed: {0}")]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Core(snf_core::Error),
}

impl From<snf_core::Error> for SnfError {
    fn from(e: snf_core::Error) -> Self {
        match e {
            snf_core::Error::Diverged { stage, epoch, loss } => SnfError::Diverged { stage, epoch, loss },
            snf_core::Error::Decode(d) => SnfError::Decode(d),
            other => SnfError::Core(other),
        }
    }
}

impl SnfError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        SnfError::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            SnfError::Config(_) | SnfError::Usage(_) | SnfError::Core(_) => 2,
            SnfError::Diverged { .. } => 3,
            SnfError::Io { .. } | SnfError::Net(_) | SnfError::Pnm { .. } | SnfError::Decode(_) => 4,
        }
    }
}

use std::io;
use std::path::PathBuf;

use agilev_core::CycleId;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Core(#[from] agilev_core::Error),
    #[error("store already initialized at {0}")]
    AlreadyInitialized(PathBuf),
    #[error("cannot write {path}: {source}")]
    Unwritable { path: PathBuf, source: io::Error },
    #[error("no store at {0}; run `agilev init`")]
    NotInitialized(PathBuf),
    #[error("another process holds the store lock at {0}")]
    Locked(PathBuf),
    #[error("cycle {0} is still open")]
    CycleOpen(CycleId),
    #[error("{document} line {line}: {reason}")]
    Chain { document: &'static str, line: usize, reason: String },
    #[error("{document}: {reason}")]
    Document { document: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("parse error in {source_name}: {reason}")]
    Parse { source_name: String, reason: String },
}

impl StoreError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Core(e) => e.code(),
            StoreError::AlreadyInitialized(_) => "AlreadyInitialized",
            StoreError::Unwritable { .. } => "Unwritable",
            StoreError::NotInitialized(_) => "NotInitialized",
            StoreError::Locked(_) => "Locked",
            StoreError::CycleOpen(_) => "CycleOpen",
            StoreError::Chain { .. } => "ChainBroken",
            StoreError::Document { .. } => "InvalidDocument",
            StoreError::Io { .. } => "IoError",
            StoreError::Parse { .. } => "ParseError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> StoreError {
        let path = path.into();
        move |source| StoreError::Io { path, source }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

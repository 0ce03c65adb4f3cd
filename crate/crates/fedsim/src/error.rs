use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: byte {offset}: {message}")]
    Idx { path: PathBuf, offset: u64, message: String },
    #[error("{origin}:{line}: {message}")]
    Settings { origin: String, line: usize, message: String },
    #[error("metrics file: {0}")]
    Csv(String),
    #[error(transparent)]
    Core(#[from] fedsim_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

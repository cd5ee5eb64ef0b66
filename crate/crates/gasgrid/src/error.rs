use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{path}: unknown keys {}", keys.join(", "))]
    UnknownKeys { path: PathBuf, keys: Vec<String> },

    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] gasgrid_core::Error),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Input { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// 2 for bad input, 1 for runs that fail or do not converge.
    pub fn exit_code(&self) -> i32 {
        use gasgrid_core::Error as E;
        match self {
            Error::Core(E::InvalidArgument(_) | E::InvalidNetwork(_) | E::DimensionMismatch { .. }) => 2,
            Error::Core(_) => 1,
            _ => 2,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: kvc_core::Error,
    },

    #[error(transparent)]
    Core(#[from] kvc_core::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn file(path: impl Into<PathBuf>, source: impl Into<kvc_core::Error>) -> Self {
        Self::File {
            path: path.into(),
            source: source.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::File { source, .. } | Self::Core(source) => {
                if source.is_validation() {
                    EXIT_VALIDATION
                } else {
                    EXIT_RUNTIME
                }
            }
            Self::Stage { source, .. } => source.exit_code(),
        }
    }
}

use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing upstream artifact {}", .0.display())]
    MissingUpstreamArtifact(PathBuf),
    #[error("{path}: {message}", path = .path.display())]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}", path = .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("attributions miss the model margin by {0:e}")]
    LocalAccuracy(f64),
    #[error(transparent)]
    Core(#[from] iqp_core::Error),
    #[error("city `{city}`, stage `{stage}`: {source}")]
    Stage {
        city: String,
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn in_stage(self, city: &str, stage: &'static str) -> Self {
        match self {
            e @ Self::Stage { .. } => e,
            e => Self::Stage {
                city: city.to_string(),
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, skipping stage context.
    pub fn root(&self) -> &Error {
        match self {
            Self::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Process exit code: 1 config, 2 data, 3 model quality.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Self::Config(_) | Self::MissingUpstreamArtifact(_) => 1,
            Self::Core(iqp_core::Error::NoCorrectInstances) => 3,
            _ => 2,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown vertex: {0}")]
    UnknownVertex(String),

    #[error("invalid vertex pair: {0} and {1} are the same vertex")]
    InvalidPair(u32, u32),

    #[error("{0}")]
    Mode(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("sampling exhausted after {attempts} attempts: {message}")]
    Exhausted { attempts: usize, message: String },

    #[error("vertex {0} has no edges to score")]
    EmptyNeighborhood(u32),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("cannot stratify: {0}")]
    Stratification(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("model format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn exhausted(attempts: usize, message: impl Into<String>) -> Self {
        Error::Exhausted { attempts, message: message.into() }
    }

    /// Strips any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e) })
    }
}

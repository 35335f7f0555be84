use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty market: the company or seeker universe has size zero")]
    EmptyMarket,

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("no reply observations: training data contains no scouted events")]
    NoReplyObservations,

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("invalid probability: {0}")]
    InvalidProbability(f64),

    #[error("invalid weight: alpha = {0} is outside [0, 1]")]
    InvalidWeight(f64),

    #[error("unassigned company: {0} has no segment")]
    UnassignedCompany(u32),

    #[error("invalid cutoff: k must be at least 1")]
    InvalidCutoff,

    #[error("degenerate folds: {0}")]
    DegenerateFolds(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("missing artifact {}: run `{producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: &'static str, cause: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

/// Tags an error with the pipeline stage it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| match source {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                cause: Box::new(other),
            },
        })
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {0} sits at the camera center")]
    DegeneratePoint(u64),

    #[error("degenerate point configuration: {0}")]
    Degenerate(&'static str),

    #[error("need at least {needed} {what}, got {got}")]
    Insufficient { what: &'static str, needed: usize, got: usize },

    #[error("consensus failed: best hypothesis had {inliers} inliers")]
    ConsensusFailed { inliers: usize },

    #[error("empty match list")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("batch norm over a single element per channel is degenerate without an epsilon guard")]
    DegenerateVariance,

    #[error("invalid frame id {0:?}: expected \"videoName/frameNumber\"")]
    FrameId(String),

    #[error("label {value} for {frame_id} is outside [-1000, 1000]")]
    LabelRange { frame_id: String, value: i64 },

    #[error("missing frame image for {frame_id} at {path}")]
    MissingFrame { frame_id: String, path: PathBuf },

    #[error("bad image for {frame_id}: {detail}")]
    BadImage { frame_id: String, detail: String },

    #[error("{path}:{line}: {detail}")]
    Parse { path: String, line: usize, detail: String },

    #[error("corrupt container {path}: {detail}")]
    Corrupt { path: String, detail: String },

    #[error("no valid sequence window in the supplied containers")]
    EmptyDataset,

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("partition infeasible: subject {subject} cannot be placed ({detail})")]
    Infeasible { subject: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

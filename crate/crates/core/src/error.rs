use std::path::PathBuf;

use thiserror::Error;

use crate::graph::{NodeId, NodeKind, Relation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: malformed record: {reason}")]
    MalformedRecord {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("{file}:{line}: edge references unknown node {node}")]
    UnknownNode {
        file: String,
        line: usize,
        node: NodeId,
    },

    #[error("node {id} declared as both {first:?} and {second:?}")]
    ConflictingKind {
        id: NodeId,
        first: NodeKind,
        second: NodeKind,
    },

    #[error("relation {relation:?} cannot join {src:?} and {dst:?}")]
    RelationKindMismatch {
        relation: Relation,
        src: NodeKind,
        dst: NodeKind,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid metapath {spec:?}: {reason}")]
    InvalidMetapath { spec: String, reason: String },

    #[error("node {0} is not a paper")]
    NotAPaper(NodeId),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular linear system")]
    Singular,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("year index {0} is out of range (must be >= 1)")]
    YearOutOfRange(i64),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("missing ground truth for paper {0}")]
    MissingGroundTruth(NodeId),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("plot: {0}")]
    Plot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "malformed_record",
            Error::UnknownNode { .. } => "unknown_node",
            Error::ConflictingKind { .. } => "conflicting_kind",
            Error::RelationKindMismatch { .. } => "relation_kind_mismatch",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidMetapath { .. } => "invalid_metapath",
            Error::NotAPaper(_) => "not_a_paper",
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Singular => "singular",
            Error::EmptyInput(_) => "empty_input",
            Error::YearOutOfRange(_) => "year_out_of_range",
            Error::Diverged { .. } => "diverged",
            Error::MissingGroundTruth(_) => "missing_ground_truth",
            Error::Checkpoint(_) => "checkpoint",
            Error::Plot(_) => "plot",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

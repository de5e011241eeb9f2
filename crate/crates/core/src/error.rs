use std::path::PathBuf;

use thiserror::Error;

use crate::partition::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} is not a valid partition node")]
    InvalidNode { node: NodeId },

    #[error("depth {depth} exceeds the configured maximum depth {max}")]
    DepthOverflow { depth: u32, max: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("message for phase {got} recorded while the ledger is in phase {expected}")]
    PhaseMismatch { expected: u32, got: u32 },

    #[error("active-set uploads disagree on depth ({first} vs {other})")]
    DepthMismatch { first: u32, other: u32 },

    #[error("expected exactly one upload from each of {expected} clients, missing client {missing}")]
    MissingClient { expected: usize, missing: usize },

    #[error("client {client} uploaded more than once in phase {phase}")]
    DuplicateClient { client: usize, phase: u32 },

    #[error("malformed upload: {0}")]
    MalformedUpload(String),

    #[error("client {client} pulled {node} but its schedule expects {expected}")]
    PullOutsideSchedule { client: usize, node: NodeId, expected: String },

    #[error("client {client} is in mode {mode}, which does not allow {action}")]
    InvalidMode { client: usize, mode: &'static str, action: &'static str },

    #[error("no global estimate for own active node {node}")]
    MissingGlobalEstimate { node: NodeId },

    #[error("node {node} has no data from any client")]
    NodeWithoutData { node: NodeId },

    #[error("degenerate fit: need at least two epsilon values, got {0}")]
    DegenerateFit(usize),

    #[error("epsilon list must be strictly decreasing and positive")]
    InvalidEpsilonList,

    #[error("privacy violation: {0}")]
    Privacy(#[from] crate::protocol::PrivacyViolation),

    #[error("codec: {0}")]
    Codec(String),

    #[error("oracle report does not match the configuration: {0}")]
    OracleMismatch(String),

    #[error("oracle fixture {path} not found")]
    OracleMissing { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

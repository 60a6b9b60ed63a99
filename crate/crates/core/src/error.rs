use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty graph")]
    EmptyGraph,
    #[error("graph has empty 2-core")]
    EmptyTwoCore,
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:.3e})"
    )]
    NotConverged { iterations: usize, residual: f64 },
    #[error("edge ({0}, {1}) is already in the graph")]
    EdgePresent(usize, usize),
    #[error("edge ({0}, {1}) is not in the graph")]
    EdgeAbsent(usize, usize),
    #[error("invalid edge: self-loop on node {0}")]
    SelfLoop(usize),
    #[error("resistance at bridge limit (r = {0})")]
    BridgeLimit(f64),
    #[error("graph saturated for FoF additions")]
    FofSaturated,
    #[error("graph saturated for random additions")]
    RandomSaturated,
    #[error("dense oracle limited to {max} nodes, graph has {n}")]
    TooLargeForDense { n: usize, max: usize },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or parameters rather than by a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::EmptyGraph
            | Error::EmptyTwoCore
            | Error::NodeOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidParameter(_)
            | Error::EdgePresent(..)
            | Error::EdgeAbsent(..)
            | Error::SelfLoop(_)
            | Error::TooLargeForDense { .. }
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Io { .. } => true,
            Error::Trial { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

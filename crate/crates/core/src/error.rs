use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain")]
    EmptyDomain,

    #[error("no admissible sensors")]
    NoAdmissibleSensors,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameters pairwise distinct: duplicate parameter {0:?}")]
    DuplicateParameter(Vec<f64>),

    #[error("non-positive diffusion coefficient {value} in region {region}")]
    NonPositiveDiffusion { region: u8, value: f64 },

    #[error(
        "eigenvalue iteration did not converge after {iterations} iterations \
         (|dk| = {dk:.3e}, source change = {source_change:.3e})"
    )]
    NotConverged {
        iterations: usize,
        dk: f64,
        source_change: f64,
    },

    #[error("negative flux {value:.3e} at node {node} after convergence")]
    NegativeFlux { node: usize, value: f64 },

    #[error("snapshot at mu = {mu:?} failed: {source}")]
    Snapshot {
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("mask cannot resolve residual")]
    MaskCannotResolve,

    #[error("component {0} is not available in this model")]
    MissingComponent(crate::diffusion::Component),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("bvls exceeded its pivot cap of {cap} (free = {free}, max KKT violation = {violation:.3e})")]
    BvlsIterationCap {
        cap: usize,
        free: usize,
        violation: f64,
    },

    #[error("slope fit needs strictly positive data, got {0}")]
    NonPositive(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by bad input files or configuration rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::InvalidInput(_)
                | Error::DuplicateParameter(_)
                | Error::GridMismatch(_)
                | Error::NoAdmissibleSensors
                | Error::EmptyDomain
                | Error::OutOfRange { .. }
                | Error::LengthMismatch { .. }
                | Error::MissingComponent(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive conductivity {value} at node {node}")]
    NonPositiveSigma { node: usize, value: f64 },

    #[error("unknown arc label {label} (mesh has {n_arcs} arcs)")]
    UnknownArc { label: usize, n_arcs: usize },

    #[error("solver failure: {reason} (relative residual {residual:e})")]
    Solver { reason: String, residual: f64 },

    #[error("forward solve failed for omega {omega}, coil {coil}: {source}")]
    Forward {
        omega: f64,
        coil: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("relative error undefined: reference field has zero norm")]
    ZeroDenominator,

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported file format: expected `{expected}`, found `{found}`")]
    Version { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the linear algebra (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Solver { .. } => true,
            Error::Forward { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

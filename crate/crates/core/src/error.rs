use thiserror::Error;

/// Errors raised by the toolkit. Negative scientific outcomes (an
/// infeasible synthesis, a failed certificate) are reported through result
/// types, not through this enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("variable v{var} is out of range for a point of dimension {dim}")]
    VarOutOfRange { var: usize, dim: usize },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("node {node}: {what} references v{var}, which is outside the allowed variables")]
    Locality {
        node: usize,
        what: String,
        var: usize,
    },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error(
        "metric block of node {node} is singular or ill-conditioned (condition estimate {cond:e}); \
         consider shrinking the box"
    )]
    SingularMetric { node: usize, cond: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_node(self, node: usize) -> Error {
        Error::AtNode {
            node,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_time(self, t: f64) -> Error {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

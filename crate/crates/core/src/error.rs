use thiserror::Error;

/// Errors produced by the numerical kernels, estimators and drivers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{op}: argument out of domain ({detail})")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: quadrature did not converge (last change {last_change:e} at {nodes} nodes)")]
    NonConvergence {
        op: &'static str,
        nodes: usize,
        last_change: f64,
    },

    #[error("photon-number cutoff {n_max} too small: tail mass {tail:e} exceeds {limit:e}")]
    CutoffTooSmall { n_max: usize, tail: f64, limit: f64 },

    #[error("distribution entry p[{n}] = {value:e} is negative beyond round-off")]
    NegativeProbability { n: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("sign condition violated: {0}")]
    SignCondition(String),

    #[error("estimation invalid: {0}")]
    EstimationInvalid(String),

    #[error("linear system ill-conditioned: relative residual {residual:e}")]
    IllConditioned { residual: f64 },

    #[error("every grid point yields a zero key rate")]
    EmptyFeasibleRegion,

    #[error("no positive key rate at any distance")]
    NoPositiveRate,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        op,
        detail: detail.into(),
    }
}

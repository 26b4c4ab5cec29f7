use crate::algebra::CMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid structure: {0}")]
    Structure(String),

    /// The generator has (at least) a two-dimensional kernel. Both candidate
    /// fixed points are reported, trace-normalised where possible.
    #[error("steady state is not unique: two smallest singular values {sigma:?}")]
    AmbiguousSteadyState {
        sigma: [f64; 2],
        candidates: Box<[CMatrix; 2]>,
    },

    #[error("steady-state solver failed to converge: residual {residual:e}")]
    SolverFailure { residual: f64 },

    #[error("steady state violates density invariants: {0}")]
    NotADensity(String),

    #[error("integration failed at t = {t}: step size {step:e} underflowed")]
    Integration { t: f64, step: f64 },

    #[error("spectrum is degenerate: every eigenvalue is within {threshold:e} of zero")]
    DegenerateSpectrum { threshold: f64 },

    #[error("eigenvalue iteration did not converge")]
    EigenFailure,

    #[error("numerical health check failed: {quantity} = {value:e}")]
    NumericalHealth { quantity: &'static str, value: f64 },

    #[error("truncation did not converge by n_max = {limit}; observed sequence {sequence:?}")]
    Truncation { limit: usize, sequence: Vec<f64> },

    #[error("quadrature did not converge: error estimate {estimate:e}, tail estimate {tail:e}")]
    Quadrature { estimate: f64, tail: f64 },

    #[error("evaluation failed at lambda = {lambda:?}: {source}")]
    Evaluation {
        lambda: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("gradient component {component} failed: {source}")]
    Gradient {
        component: usize,
        #[source]
        source: Box<Error>,
    },
}

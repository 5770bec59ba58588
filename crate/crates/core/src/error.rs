use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("spectral-collapse regime: |u| = {u} exceeds the supported limit {limit}")]
    SpectralCollapse { u: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error(
        "truncation not converged at n_max = {n_max}: lowest levels moved by {shift:.3e} \
         (tolerance {tolerance:.1e}) when adding {extra} modes"
    )]
    TruncationNotConverged {
        n_max: usize,
        extra: usize,
        shift: f64,
        tolerance: f64,
    },

    #[error("no {kind} transition for these parameters: {reason}")]
    NoTransition { kind: &'static str, reason: String },

    #[error("heat/work signs (Q_h = {q_hot:.3e}, Q_c = {q_cold:.3e}, W = {work:.3e}) violate the Clausius inequality")]
    ClausiusViolation { q_hot: f64, q_cold: f64, work: f64 },

    #[error("positivity lost during propagation (min population {min_population:.3e}) at dt = {dt:.3e}")]
    PositivityLost { min_population: f64, dt: f64 },

    #[error("trace drift {drift:.3e} exceeds tolerance at dt = {dt:.3e}; reduce the step size")]
    TraceDrift { drift: f64, dt: f64 },

    #[error("unitary stroke lost unitarity (deviation {deviation:.3e}) with {steps} steps")]
    NonUnitary { deviation: f64, steps: usize },

    #[error("invalid density matrix: {reason}")]
    InvalidState { reason: String },

    #[error("{stroke} stroke failed: {source}")]
    Stroke {
        stroke: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_stroke(stroke: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stroke {
            stroke,
            source: Box::new(source),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters, malformed input, violated preconditions.
    Input,
    /// The numerics failed: no convergence, step underflow, degeneracy.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator '{label}' is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { label: String, deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension {requested} exceeds the configured limit of {limit}")]
    ResourceLimit { requested: usize, limit: usize },

    #[error("eigensolver did not converge for '{label}'")]
    EigenNoConvergence { label: String },

    #[error("near-degenerate spectrum at {point:?}: gap {gap:.3e}")]
    Degenerate { point: Vec<f64>, gap: f64 },

    #[error("generators are not simultaneously diagonal at {point:?} (residual {residual:.3e})")]
    NotCommuting { point: Vec<f64>, residual: f64 },

    #[error("step size underflow on segment {segment} at tau = {tau} (step {step:.3e})")]
    StepUnderflow { segment: usize, tau: f64, step: f64 },

    #[error("propagator lost unitarity (defect {defect:.3e})")]
    UnitarityLoss { defect: f64 },

    #[error("diabatic labeling failed: {0}")]
    Labeling(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sweep rate lies on a regime boundary: {0}")]
    DegenerateRegime(String),

    #[error("adiabaticity violated at {point:?}: kappa = {kappa:.3e}")]
    Adiabaticity { point: Vec<f64>, kappa: f64 },

    #[error("unsupported crossing: {0}")]
    UnsupportedCrossing(String),

    #[error("evaluation failed at {point:?}: {source}")]
    Evaluation {
        point: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DimensionMismatch { .. }
            | Error::NotHermitian { .. }
            | Error::InvalidParameter(_)
            | Error::IndexOutOfRange { .. }
            | Error::ResourceLimit { .. }
            | Error::Precondition(_)
            | Error::DegenerateRegime(_)
            | Error::UnsupportedCrossing(_)
            | Error::Serialization(_) => ErrorKind::Input,
            Error::EigenNoConvergence { .. }
            | Error::Degenerate { .. }
            | Error::NotCommuting { .. }
            | Error::StepUnderflow { .. }
            | Error::UnitarityLoss { .. }
            | Error::Labeling(_)
            | Error::Adiabaticity { .. } => ErrorKind::Numerical,
            Error::Evaluation { source, .. } => source.kind(),
        }
    }

    pub(crate) fn at_point(self, point: &[f64]) -> Error {
        match self {
            e @ Error::Evaluation { .. } => e,
            e => Error::Evaluation {
                point: point.to_vec(),
                source: Box::new(e),
            },
        }
    }
}

use thiserror::Error;

/// Errors raised by simulation, filtering and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration blew up at t = {time}: |x|_inf = {norm:e}")]
    IntegrationBlowup { time: f64, norm: f64 },

    #[error("constraint infeasible after {attempts} attempts from x' = {origin:?} (acceptance estimate {acceptance:e})")]
    ConstraintInfeasible {
        attempts: usize,
        origin: Vec<f64>,
        acceptance: f64,
        particle: Option<usize>,
    },

    #[error("weight degeneracy: every log-weight is -inf or NaN (max log-likelihood {max_log_likelihood})")]
    WeightDegeneracy { max_log_likelihood: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel is not mixing: {0}")]
    NotMixing(String),

    #[error("degenerate constraint: retained mass {0} is zero")]
    DegenerateConstraint(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with step annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn step(&self) -> Option<usize> {
        match self {
            Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }

    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self.root(),
            Error::WeightDegeneracy { .. }
                | Error::ConstraintInfeasible { .. }
                | Error::IntegrationBlowup { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

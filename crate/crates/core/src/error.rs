use thiserror::Error;

use crate::estimation::FitResult;

/// Errors raised by model construction, fitting and testing.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs are inconsistent with the operation's contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A query fell outside a tabulated domain.
    #[error("{material}: energy {energy} MeV outside tabulated range [{min}, {max}] MeV{context}")]
    Range {
        material: String,
        energy: f64,
        min: f64,
        max: f64,
        /// Extra location info, e.g. which nuclide line triggered the lookup.
        context: String,
    },

    /// The likelihood or its derivatives cannot be evaluated.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// The identifiability condition is violated numerically.
    #[error("singular information matrix ({0}); attenuation or response directions are collinear, so the thicknesses are not identifiable")]
    Singular(String),

    /// An iterative fit stopped before meeting its convergence criterion.
    #[error("{what} did not converge after {} iterations (criterion {:.3e})", .fit.iterations, .fit.criterion_value)]
    NonConvergence { what: &'static str, fit: Box<FitResult> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for failures of a statistical procedure (as opposed to bad input).
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::Singular(_) | Error::Evaluation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} would need {size} entries, above the guard of {limit}")]
    GuardExceeded {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("mode {mode} needs {needed} basis functions but the budget is {budget}")]
    BasisBudget {
        mode: usize,
        needed: usize,
        budget: usize,
    },

    #[error("tensor train canonical center is {found:?}, expected {expected}")]
    CenterMismatch { expected: usize, found: Option<usize> },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("retraction input is rank deficient (|R_ii| = {0:e})")]
    RankDeficient(f64),

    #[error("empty batch")]
    EmptyBatch,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("matrix is not orthogonal (‖RᵀR − I‖_F = {0:e})")]
    NotOrthogonal(f64),

    #[error("potential is not bounded below on the scan grid (min {0:e})")]
    NotBoundedBelow(f64),

    #[error("no proposal accepted in the last {0} steps")]
    ZeroAcceptance(usize),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        detail: String,
        /// Model state at the end of the last finite epoch.
        last_good: Box<crate::model::ModelState>,
    },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

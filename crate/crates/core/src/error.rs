use thiserror::Error;

use crate::lattice::Event;

#[derive(Debug, Error)]
pub enum Error {
    #[error("proper time undefined: {to:?} is not in the causal future of {from:?}")]
    NotCausal { from: Event, to: Event },

    #[error("time profile is not 1-Lipschitz between sites {site} and {}", site + 1)]
    NotLipschitz { site: usize },

    #[error("cut has {got} sites, expected {expected}")]
    SiteCount { expected: usize, got: usize },

    #[error("event set is not past complete at {0:?}")]
    NotPastComplete(Event),

    #[error("event set is empty or covers the whole strip; it has no boundary cut")]
    DegenerateRegion,

    #[error("set of abstract 4-cells is not predecessor complete")]
    NotPredecessorComplete,

    #[error("ordering of 4-cells is not an admissible sequence: {0}")]
    NotAdmissible(String),

    #[error("{what}: {size} exceeds the enumeration guard of {limit}; reduce {hint}")]
    GuardExceeded {
        what: &'static str,
        size: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("vertex at site {site} (t = {t}) does not lie on cut H_{particle},{flash}")]
    NotOnCut {
        particle: usize,
        flash: usize,
        site: usize,
        t: i64,
    },

    #[error("cut-off set is empty or does not contain the profile center {0}")]
    CenterOutsideSet(usize),

    #[error("site {0} is not in the overlap of the two cuts")]
    NotInOverlap(usize),

    #[error("operator is not positive semidefinite (eigenvalue {0:e})")]
    NegativeEigenvalue(f64),

    #[error("operator is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("conditioning on a null event (|W psi0| = {0:e})")]
    NullEvent(f64),

    #[error("joint distribution is not normalized: total = {0:.17}")]
    NotNormalized(f64),

    #[error("flat-limit precondition failed: {0}")]
    NotFlat(String),

    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

use thiserror::Error;

use crate::lattice::Site;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("region is not contained in {0}")]
    NotSubset(&'static str),

    #[error("empty region where a nonempty one is required")]
    EmptyRegion,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("eigensolver produced an invalid decomposition")]
    Eigensolver,

    #[error("on-site term at {site} violates the gap condition: {reason}")]
    GapViolation { site: Site, reason: String },

    #[error("interaction at center {center} is outside the model class: {reason}")]
    OutsideModelClass { center: Site, reason: String },

    #[error("coupling between {x} and {y} cannot be represented with range {range}")]
    CouplingRange { x: Site, y: Site, range: u32 },

    #[error("size cap exceeded for {what}: {got} > {limit}")]
    SizeCap {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("set is not R-connected")]
    NotConnected,

    #[error("supports are R-connected to each other")]
    SupportsConnected,

    #[error("X and Y lie in the same supercluster")]
    EventNotSatisfied,

    #[error("interaction at center {center} is not negative semidefinite (max eigenvalue {max_eigenvalue:.3e})")]
    NotNormalized { center: Site, max_eigenvalue: f64 },

    #[error("only {usable} points above the covariance floor; need at least 2")]
    DecayFloor { usable: usize },

    #[error("covariance profile does not decay (slope {slope:.3e})")]
    NoDecay { slope: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

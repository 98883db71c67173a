use crate::lattice::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("scatterers {first} and {second} (offset {offset}) overlap: gap {gap:.3e}")]
    Overlap {
        first: usize,
        second: usize,
        offset: Cell,
        gap: f64,
    },

    #[error("open corridor in lattice direction ({p}, {q})")]
    Corridor { p: i64, q: i64 },

    #[error("no collision within {bound} of ({x}, {y}) along ({dx}, {dy})")]
    NoCollisionWithinBound {
        bound: f64,
        x: f64,
        y: f64,
        dx: f64,
        dy: f64,
    },

    #[error("grazing collision at step {step} (|cos phi| = {cos_phi:.2e})")]
    Grazing { step: i64, cos_phi: f64 },

    #[error("invalid Markov extension: {0}")]
    InvalidChain(String),

    #[error("lattice support of {needed} entries exceeds the cell budget {budget}")]
    MemoryBound { needed: usize, budget: usize },

    #[error("{identity} violated at n = {n}: residual {residual:.3e}")]
    IdentityViolation {
        identity: &'static str,
        n: usize,
        residual: f64,
    },

    #[error("covariance determinant {det:.3e} is not positive")]
    SingularSigma { det: f64 },

    #[error("covariance estimate is not positive definite (eigenvalues {0:?})")]
    NotPositiveDefinite([f64; 2]),

    #[error("mean drift {drift:?} exceeds 4 standard errors {stderr:?}")]
    NonzeroDrift { drift: [f64; 2], stderr: [f64; 2] },

    #[error("hypothesis {hypothesis} failed: {detail}")]
    HypothesisFailed {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

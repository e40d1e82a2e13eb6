use thiserror::Error;

/// Errors raised by the library. Check failures that carry a verdict (EL checks,
/// hyperbolicity witnesses, exactness reports) are returned as values instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid derivative order {0} (expected 0, 1 or 2)")]
    InvalidOrder(u8),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("lattice: {0}")]
    Lattice(String),
    #[error("kernel matrix is singular")]
    SingularKernel,
    #[error("critical weights: weight {index} = {value:e} is not positive")]
    NegativeWeight { index: usize, value: f64 },
    #[error("critical weights: iteration stalled at relative residual {0:e}")]
    NotConverged(f64),
    #[error("variation step too large: varied points {0} and {1} collide")]
    StepTooLarge(usize, usize),
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("foliation: {0}")]
    Foliation(String),
    #[error("hyperbolicity fails at t = {t}: margin {margin:e}")]
    NotHyperbolic {
        t: f64,
        margin: f64,
        witness: Vec<f64>,
    },
    #[error("lens has empty W")]
    EmptyW,
    #[error("inhomogeneity leaks outside W: {0:e} relative")]
    NotInW(f64),
    #[error("weak system inconsistent: least-squares residual {0:e} relative")]
    Inconsistent(f64),
    #[error("commutator inhomogeneity leaks outside Z at point {0}")]
    ZLeak(usize),
    #[error("weak identity violated: {0:e} relative")]
    WeakIdentity(f64),
    #[error("covering gap: point {0} lies in no W and not in the top margin")]
    CoveringGap(usize),
    #[error("strong causality violated: W of lens {0} meets W of lens {1} reachable from it")]
    StrongCausality(usize, usize),
    #[error("time axis is periodic; gluing needs a time-bounded slab")]
    TimePeriodic,
    #[error("gluing stalled after {iterations} iterations (residual {residual:e})")]
    MaxIter { iterations: usize, residual: f64 },
    #[error("source point {0} is outside the admissible domain")]
    NotAdmissible(usize),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

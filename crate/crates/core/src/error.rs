use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("element {0} is out of range")]
    ElementOutOfRange(usize),
    #[error("coefficient {value} on element {element} is not strictly positive")]
    NonPositiveCoefficient { element: usize, value: f64 },
    #[error("|V|/U_T = {value} exceeds the clamp {clamp} at vertex {vertex}")]
    ExponentClamp { vertex: usize, value: f64, clamp: f64 },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("conjugate gradients stopped after {iterations} iterations; last relative residual {}", history.last().copied().unwrap_or(f64::NAN))]
    LinearSolver { iterations: usize, history: Vec<f64> },
    #[error("Newton iteration failed to reduce the residual; trace {trace:?}")]
    NewtonDiverged { trace: Vec<f64> },
    #[error("{field} became non-positive at vertex {vertex}")]
    Positivity { field: &'static str, vertex: usize },
    #[error("meshes are not nested")]
    NotNested,
    #[error("objects live on different meshes")]
    MeshMismatch,
    #[error("at least one sample is required")]
    EmptySamples,
    #[error("{what} needs at least {needed} data points, got {got}")]
    InsufficientData { what: &'static str, needed: usize, got: usize },
    #[error("{what} must be strictly positive, got {value}")]
    NonPositiveData { what: &'static str, value: f64 },
    #[error("hierarchy has {levels} levels; about {additional} more are needed to reach the tolerance")]
    HierarchyTooShallow { levels: usize, additional: usize },
    #[error("tolerance {0} is infeasible")]
    InfeasibleTolerance(f64),
    #[error("contact doping {0} cm^-3 is negative")]
    ContactDoping(f64),
}

pub type Result<T> = core::result::Result<T, Error>;

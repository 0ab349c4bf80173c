use thiserror::Error;

/// Errors raised by the invariant-metric pipeline.
///
/// Each variant names the module that produced it so that messages
/// surfaced by the CLI are attributable without a backtrace.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain: point lies outside the domain")]
    PointOutsideDomain,
    #[error(
        "domain: nearest boundary point is not unique (distance {distance:.3e} exceeds tubular radius {radius:.3e})"
    )]
    AmbiguousNearestPoint { distance: f64, radius: f64 },
    #[error("domain: vector is not complex-tangential (normal component {0:.3e})")]
    VectorNotTangential(f64),
    #[error("domain: quadrature resolution too coarse ({nodes} nodes for {required} basis functions)")]
    ResolutionTooCoarse { nodes: usize, required: usize },
    #[error("domain: nearest-point solver did not converge")]
    NearestPointFailed,
    #[error("domain: {0}")]
    InvalidDomain(String),

    #[error("basis: Gram matrix is indefinite (smallest eigenvalue {0:.3e})")]
    IndefiniteGram(f64),
    #[error("basis: Gram matrix is rank deficient (eigenvalue ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("basis: derivative order {0} exceeds the supported maximum of 3")]
    OrderExceedsSupported(usize),
    #[error("basis: basis does not match the domain ({0})")]
    BasisDomainMismatch(String),
    #[error("basis: point at boundary distance {distance:.3e} is inside the truncation layer {limit:.3e}")]
    TruncationRadiusExceeded { distance: f64, limit: f64 },

    #[error("metrics: kernel value {0:.3e} is not positive")]
    NonpositiveKernel(f64),
    #[error("metrics: metric tensor is singular or not positive definite")]
    SingularMetric,
    #[error("metrics: Kobayashi-Fuks tensor lost positivity (min eigenvalue {0:.3e})")]
    PositivityViolation(f64),
    #[error("metrics: operation requires dimension one, got {0}")]
    DimensionNotOne(usize),
    #[error("metrics: jet order {have} is below the required order {need}")]
    JetOrderTooLow { have: usize, need: usize },
    #[error("metrics: no closed form available for {0}")]
    UnsupportedKind(String),
    #[error("metrics: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("extremal: constrained subspace is empty")]
    EmptySubspace,
    #[error("extremal: matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("extremal: smaller domain is not contained in the larger one")]
    ContainmentViolated,

    #[error("scaling: boundary is not strongly pseudoconvex at the base point (Levi eigenvalue {0:.3e})")]
    NotStronglyPseudoconvex(f64),
    #[error("scaling: defining-function gradient degenerates (d rho / d z_n = {0:.3e})")]
    DegenerateGradient(f64),
    #[error("scaling: Levi form is not positive definite")]
    LeviNotPositive,
    #[error("scaling: Cayley transform pole (z_n = 1)")]
    Pole,
    #[error("scaling: scaling map misses the base point by {0:.3e}")]
    ScalingMismatch(f64),

    #[error("geodesics: finite-difference stencil leaves the domain")]
    NearBoundary,
    #[error("geodesics: trajectory left the admissible region at step {0}")]
    TrajectoryExitsRegion(usize),
    #[error("geodesics: loop search did not converge (gradient norm {0:.3e})")]
    NotConverged(f64),
    #[error("geodesics: winding number zero is the trivial class")]
    TrivialClass,
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Failures raised across the library. Variant names follow the operation
/// contracts; the payload says which quantity tripped the guard.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Gram matrix is not positive definite to tolerance (pivot ratio {ratio:.3e})")]
    SingularGram { ratio: f64 },
    #[error("linear system is singular or numerically singular: {0}")]
    SingularSystem(String),
    #[error("form is not sectorial: {0}")]
    NotSectorial(String),
    #[error("matrix exponential overflow: {0}")]
    ExpOverflow(String),
    #[error("contour angle {angle} lies outside the admissible window ({lo}, {hi})")]
    ContourOutsideSector { angle: f64, lo: f64, hi: f64 },
    #[error("quadrature unstable: refinement changed {quantity} by {relative_change:.3e}")]
    QuadratureUnstable {
        quantity: String,
        relative_change: f64,
    },
    #[error("operator is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("lambda must be non-real, got {0}")]
    RealLambda(String),
    #[error("requested {modes} modes on a grid with {interior} interior nodes")]
    ModesExceedGrid { modes: usize, interior: usize },
    #[error("element quadrature too low: refined quadrature differs by {0:.3e}")]
    QuadratureOrderTooLow(f64),
    #[error("domain level {0} has no interior node")]
    EmptyDomain(usize),
    #[error("initial data do not converge: {0}")]
    InitialDataNotConverging(String),
    #[error("iterative solver stagnated after {iterations} iterations (residual {residual:.3e})")]
    SolverStagnation { iterations: usize, residual: f64 },
    #[error("homogenized tensor is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("grid spacing {h} does not resolve epsilon {epsilon} (need h <= epsilon/16)")]
    CellUnderResolved { h: f64, epsilon: f64 },
    #[error("support violation: {0}")]
    SupportViolation(String),
    #[error("truncation too small: ambient dimension {ambient} < {required}")]
    TruncationTooSmall { ambient: usize, required: usize },
    #[error("probe support {support} must be smaller than every n (min n = {min_n})")]
    ProbeSupportTooLarge { support: usize, min_n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

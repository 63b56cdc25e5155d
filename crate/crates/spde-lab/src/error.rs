use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A covariance or Green spec violates one of its parameter boxes.
    #[error("invalid parameter: {constraint}")]
    Parameter { constraint: String },

    /// Evaluation requested at a singularity of the kernel or density.
    #[error("evaluation at a singular point: {0}")]
    SingularPoint(String),

    /// Adaptive quadrature failed to stabilize under refinement.
    #[error("quadrature failed to converge: {0}")]
    QuadratureDivergence(String),

    /// Slope fit asked for with too few points or a degenerate abscissa.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A shifted inner product was requested with w = 0.
    #[error("shift vector w must be nonzero")]
    ZeroShift,

    /// Bootstrap error of a Monte Carlo integrand exceeded its budget.
    #[error("monte carlo estimate unstable: {0}")]
    MonteCarloUnstable(String),

    /// Requested Hölder exponents exceed the admissible range.
    #[error("kappa out of range: {0}")]
    KappaOutOfRange(String),

    /// Field norm exceeded the overflow guard during time stepping.
    #[error("unstable step: field norm {norm:.3e} at step {step}")]
    UnstableStep { step: usize, norm: f64 },

    /// A derivative time was requested that is not on the saved grid.
    #[error("time {0} not on the saved grid")]
    TimeNotSaved(f64),

    /// Not enough replicas for a density estimate.
    #[error("insufficient replicas: have {have}, need {need}")]
    InsufficientReplicas { have: usize, need: usize },

    /// The oracle covariance matrix is numerically singular.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parameter(constraint: impl Into<String>) -> Self {
        Error::Parameter {
            constraint: constraint.into(),
        }
    }

    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter { .. } => 2,
            Error::QuadratureDivergence(_) => 3,
            Error::MonteCarloUnstable(_) => 4,
            _ => 5,
        }
    }
}

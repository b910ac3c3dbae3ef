use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel evaluation out of domain at ({x}, {y})")]
    EvaluationDomain { x: f64, y: f64 },

    #[error("normalization factor {n:e} is singular; the kernel has zero trace")]
    NormalizationSingular { n: f64 },

    #[error("trace quadrature did not converge: estimate {estimate}, error {error:e}")]
    TraceQuadratureFailure { estimate: f64, error: f64 },

    #[error("eigenfunction index {n} beyond the stability horizon {horizon}")]
    StabilityHorizon { n: usize, horizon: usize },

    #[error("kernel is not Hermitian on the grid (relative defect {defect:e})")]
    NonHermitianKernel { defect: f64 },

    #[error("eigensolver failed: {0}")]
    EigenSolve(String),

    #[error("determinant route limited to k <= {max}, got {k}")]
    DeterminantOrder { k: usize, max: usize },

    #[error("linear witness needs (alpha1, beta1) != (0, 0)")]
    ConstantLinearFactor,

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("Wigner window too small: boundary/peak = {ratio:e}, try window >= {suggested}")]
    WindowTooSmall { ratio: f64, suggested: f64 },

    #[error("engines disagree: {0}")]
    EngineDisagreement(String),

    #[error("witness did not re-verify: {0}")]
    WitnessNotReproduced(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Every failure mode of the library.
///
/// Schema errors are input problems (exit code 2 in the CLI); the rest are
/// numerical failures (exit code 3).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum PwxError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("derivative of order {0} is not available")]
    OrderUnavailable(u8),
    #[error("map is not expanding: inf |Df| = {0}")]
    NotExpanding(f64),
    #[error("orbit points closer than 2*delta (gap {gap}, delta {delta})")]
    GapTooSmall { gap: f64, delta: f64 },
    #[error("point is not periodic with period {0}")]
    NotPeriodic(usize),
    #[error("orbit enters the critical set at step {0}")]
    OrbitHitsCritical(usize),
    #[error("orbit data is inconsistent: telescoping residual {0}")]
    InconsistentData(f64),
    #[error("no eigenvalue of modulus close to 1")]
    NoUnitEigenvalue,
    #[error("peripheral eigenvalues are not roots of unity of order <= {0}")]
    PeriodNotFound(usize),
    #[error("quadrature budget of {0} evaluations exceeded")]
    QuadratureBudgetExceeded(u64),
    #[error("step size collapsed to {step} at t = {t}, h = {x}")]
    StepCollapse { t: f64, x: f64, step: f64 },
    #[error("maps have different branch combinatorics: {0}")]
    CombinatoricsMismatch(String),
    #[error("grid spacing {spacing} is coarser than {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("critical side {0} is not of type I")]
    NotTypeI(String),
    #[error("direction is not horizontal: max |J| = {0}")]
    NonHorizontal(f64),
    #[error("finite orbit or Misiurewicz condition fails at {0}")]
    FOorMCFails(String),
    #[error("observable is not mean zero: {0}")]
    MeanZeroViolated(f64),
    #[error("eigensolver failed: {0}")]
    Eigen(String),
}

impl PwxError {
    /// Stable identifier used in JSON error records.
    pub fn kind(&self) -> &'static str {
        match self {
            PwxError::Schema(_) => "SchemaError",
            PwxError::InvalidMap(_) => "InvalidMap",
            PwxError::OrderUnavailable(_) => "OrderUnavailable",
            PwxError::NotExpanding(_) => "NotExpanding",
            PwxError::GapTooSmall { .. } => "GapTooSmall",
            PwxError::NotPeriodic(_) => "NotPeriodic",
            PwxError::OrbitHitsCritical(_) => "OrbitHitsCritical",
            PwxError::InconsistentData(_) => "InconsistentData",
            PwxError::NoUnitEigenvalue => "NoUnitEigenvalue",
            PwxError::PeriodNotFound(_) => "PeriodNotFound",
            PwxError::QuadratureBudgetExceeded(_) => "QuadratureBudgetExceeded",
            PwxError::StepCollapse { .. } => "StepCollapse",
            PwxError::CombinatoricsMismatch(_) => "CombinatoricsMismatch",
            PwxError::GridTooCoarse { .. } => "GridTooCoarse",
            PwxError::NotTypeI(_) => "NotTypeI",
            PwxError::NonHorizontal(_) => "NonHorizontal",
            PwxError::FOorMCFails(_) => "FOorMCFails",
            PwxError::MeanZeroViolated(_) => "MeanZeroViolated",
            PwxError::Eigen(_) => "EigenFailure",
        }
    }

    /// True for input validation failures.
    pub fn is_schema(&self) -> bool {
        matches!(self, PwxError::Schema(_) | PwxError::InvalidMap(_))
    }
}

pub type Result<T> = std::result::Result<T, PwxError>;

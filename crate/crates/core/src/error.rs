use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Numerical refusals (`NotOnZeroSet`, `SingularBorderedSystem`,
/// `NonTransversalFoldEncountered`, ...) are kept distinct from usage errors so
/// callers can tell "the math declined" apart from "the input was wrong".
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite evaluation at x={x:?}, t={t}: {what}")]
    Evaluation { x: Vec<f64>, t: f64, what: String },

    #[error("t={t} outside the open interval ({lo}, {hi})")]
    DomainViolation { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid problem definition: {0}")]
    InvalidProblem(String),

    #[error("unknown problem '{0}'")]
    NotFound(String),

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error("point is not on the zero set: residual {residual:.3e} > tolerance {tol:.3e}")]
    NotOnZeroSet { residual: f64, tol: f64 },

    #[error("point is not a zero of the augmented map: residual {residual:.3e} > tolerance {tol:.3e}")]
    NotOnZeroSetOfG { residual: f64, tol: f64 },

    #[error("Hessian is not symmetric: asymmetry {asymmetry:.3e} relative to norm {norm:.3e}")]
    HessianAsymmetry { asymmetry: f64, norm: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("Jacobian is singular at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("Newton iterates left the trust ball of radius {radius}")]
    Diverged { radius: f64 },

    #[error("bordered system is singular (reciprocal condition {rcond:.3e}); the singular point is not transversal")]
    SingularBorderedSystem { rcond: f64 },

    #[error("start point is not on the curve: residual {residual:.3e}")]
    StartNotOnCurve { residual: f64 },

    #[error("total differential is rank deficient at the start point (rank {rank} < {dim})")]
    RankDeficientStart { rank: usize, dim: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate pairing <ell, v> = {0:e}")]
    DegeneratePairing(f64),

    #[error("zero input vector: {0}")]
    ZeroInput(&'static str),

    #[error("step size underflow at t={t} (dt={dt:.3e})")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("implicit step Newton solve failed at t={t}")]
    NewtonFailureInStep { t: f64 },

    #[error("gradient flow did not settle before s={s_max} (|f|={residual:.3e})")]
    NoConvergence { s_max: f64, residual: f64 },

    #[error("non-transversal fold encountered at t={t}")]
    NonTransversalFoldEncountered { t: f64 },

    #[error("no attractor found: {0}")]
    NoAttractorFound(String),

    #[error("bad load expression: {0}")]
    BadLoadExpression(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("schema violation at '{path}': {message}")]
    SchemaViolation { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

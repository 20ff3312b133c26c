use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate symbol: {0}")]
    DegenerateSymbol(String),
    #[error("profile degeneracy: {0}")]
    ProfileDegeneracy(String),
    #[error("Neumann series diverges: gamma estimate {gamma:.4} >= 1")]
    NeumannDivergence { gamma: f64 },
    #[error("linear solve failed: {0}")]
    Singular(String),
    #[error(
        "iterative solve did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NoConvergence { residual: f64, iterations: usize },
    #[error("regime mismatch: {0}")]
    Regime(String),
    #[error("tilt aliasing: max|k| * t_end = {tilt:.3} exceeds eta_max = {eta_max:.3}")]
    TiltAliasing { tilt: f64, eta_max: f64 },
    #[error("blow-up at t = {t:.4}: {reason}")]
    BlowUp { t: f64, reason: String },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

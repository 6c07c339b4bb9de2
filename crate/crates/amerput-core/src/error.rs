use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integrand is not finite at x = {x}")]
    Evaluation { x: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root solve did not converge in {iterations} iterations, best iterate {best}")]
    NonConvergence { iterations: usize, best: f64 },
    #[error("{value} is outside [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },
    #[error("state {0} is outside the model domain")]
    Domain(f64),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("unsupported parameters: {0}")]
    Unsupported(String),
    #[error("boundary solve failed at step {step}: residual {f_lo} at {lo}, {f_hi} at {hi}")]
    BoundarySolve { step: usize, lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("fixed point did not converge after {iterations} passes, last boundary change {delta}")]
    FixedPoint { iterations: usize, delta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

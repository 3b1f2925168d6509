use thiserror::Error;

/// Errors raised across the analysis, synthesis and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A constructor or operation received parameters outside its domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A transfer function or state-space model was evaluated on one of its poles.
    #[error("frequency response is singular at omega = {omega} rad/s")]
    Singularity { omega: f64 },

    /// Realization was requested for a transfer function with more zeros than poles.
    #[error(
        "transfer function is improper (relative degree {relative_degree}); \
         factor out the improper part before realizing it"
    )]
    Improper { relative_degree: i64 },

    /// A describing-function kernel matrix could not be inverted reliably.
    #[error("kernel matrix {matrix} is singular at omega = {omega} rad/s (rcond = {rcond:e})")]
    KernelSingular {
        matrix: &'static str,
        omega: f64,
        rcond: f64,
    },

    /// The simplex search exhausted its evaluation budget before converging.
    #[error(
        "optimizer did not converge after {evaluations} evaluations \
         (best zeta = {zeta}, eta = {eta}, residual = {residual})"
    )]
    NoConvergence {
        evaluations: usize,
        zeta: f64,
        eta: f64,
        residual: f64,
    },

    /// The open-loop gain does not cross 0 dB with negative slope at the requested frequency.
    #[error("open-loop gain does not cross 0 dB downward near omega = {omega} rad/s")]
    NoCrossing { omega: f64 },

    /// A simulated state left the overflow guard.
    #[error("simulation diverged at t = {time} s")]
    Divergence { time: f64 },

    /// The assembled design violates a feasibility requirement.
    #[error("design infeasible: {0}")]
    Infeasible(String),

    /// Reading or writing an output failed.
    #[error("I/O error: {0}")]
    Io(String),

    /// Configuration or design-file text could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

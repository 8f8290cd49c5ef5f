use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidModel { field: &'static str, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty spectrum: no excited mode has excitation energy <= {cutoff_over_kbt} k_B T")]
    EmptySpectrum { cutoff_over_kbt: f64 },

    #[error(
        "occupation solver did not converge for n_perp = {n_perp} after {iterations} iterations \
         (bracket [{lower:e}, {upper:e}], residual {residual:e})"
    )]
    SolverNonConvergence {
        n_perp: usize,
        iterations: usize,
        lower: f64,
        upper: f64,
        residual: f64,
    },

    #[error("numeric range failure: {0}")]
    NumericRange(String),

    #[error("state space of {states} microstates exceeds the enumeration limit {limit}")]
    StateSpaceTooLarge { states: u128, limit: u128 },

    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("loss rate vanishes at N0 = {n0}; the detailed-balance chain is broken")]
    ZeroLossRate { n0: usize },

    #[error(
        "step size collapsed to {step:e} s at t = {time:e} s; the rate table is stiff, \
         switch to the implicit (bdf) integrator"
    )]
    StepSizeCollapse { time: f64, step: f64 },

    #[error("accumulated positivity clipping {accumulated:e} exceeds budget {budget:e}")]
    ClipBudgetExceeded { accumulated: f64, budget: f64 },
}

/// Coarse classification used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    Structural,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidModel { .. } | Error::InvalidArgument(_) => ErrorKind::Config,
            Error::SolverNonConvergence { .. }
            | Error::NumericRange(_)
            | Error::StepSizeCollapse { .. }
            | Error::ClipBudgetExceeded { .. } => ErrorKind::Numeric,
            Error::EmptySpectrum { .. }
            | Error::StateSpaceTooLarge { .. }
            | Error::ShapeMismatch { .. }
            | Error::ZeroLossRate { .. } => ErrorKind::Structural,
        }
    }
}

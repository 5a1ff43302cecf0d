use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which of the two jump-coefficient assumptions failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// `|h'(x)| <= mu` and `x + h(x) >= r x` with `r > 0`.
    Growth,
    /// `(1 + h(x)/x)^(-rho) (1 + h'(x))` stays in a band `[mu1, mu2]` with `mu1 > 0`.
    Band,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Assumption::Growth => f.write_str("growth condition on h"),
            Assumption::Band => f.write_str("band condition on h"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {what}: argument {value} must be positive")]
    Domain { what: &'static str, value: f64 },

    #[error("range error in {what}: {value} underflows or overflows")]
    Range { what: &'static str, value: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParam {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("Invalid regime: gamma < 2*rho - 1 (gamma = {gamma}, rho = {rho})")]
    InvalidRegime { gamma: f64, rho: f64 },

    #[error("critical regime moment cap {cap} <= 1 leaves no usable moment order")]
    CriticalCapUnusable { cap: f64 },

    #[error("moment order p = {p} is not admissible (critical cap {cap})")]
    InadmissibleMoment { p: f64, cap: f64 },

    #[error("{assumption} violated at x = {x}: {detail}")]
    JumpAssumption {
        assumption: Assumption,
        x: f64,
        detail: String,
    },

    #[error("invalid jump family parameter {param}: {reason}")]
    JumpFamily { param: f64, reason: &'static str },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("coarsening error: {0}")]
    Coarsen(String),

    #[error("step-size guard violated: Q*dt = {q_dt} exceeds safety bound {safety}")]
    StepGuard { q_dt: f64, safety: f64 },

    #[error("implicit solve did not converge in {iterations} iterations (rhs = {rhs}, residual = {residual})")]
    NoConvergence {
        iterations: usize,
        rhs: f64,
        residual: f64,
    },

    #[error("could not bracket root of implicit step (rhs = {rhs}, last endpoint = {endpoint})")]
    Bracket { rhs: f64, endpoint: f64 },

    #[error("epsilon = {epsilon} outside admissible interval (0, {upper})")]
    Epsilon { epsilon: f64, upper: f64 },

    #[error("invalid solver configuration: {0}")]
    SolverConfig(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("path {path_index} (seed {seed}) failed: {source}")]
    PathFailed {
        seed: u64,
        path_index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Whether the error stems from configuration validation rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::InvalidParam { .. }
                | Error::InvalidRegime { .. }
                | Error::CriticalCapUnusable { .. }
                | Error::InadmissibleMoment { .. }
                | Error::JumpAssumption { .. }
                | Error::JumpFamily { .. }
                | Error::Epsilon { .. }
                | Error::StepGuard { .. }
                | Error::SolverConfig(_)
                | Error::Input(_)
        )
    }
}

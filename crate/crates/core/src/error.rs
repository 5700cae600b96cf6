use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions or malformed scenario settings.
    #[error("configuration error: {0}")]
    Config(String),

    /// Neither player's (A, B_i, sqrt(Q_i)) triple is stabilizable-detectable,
    /// or a Riccati solve could not find a stabilizing start.
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A precondition of the called operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("state diverged at t = {time} s")]
    Divergence { time: f64 },

    /// A polytope intersection came out empty.
    #[error("empty polytope: {0}")]
    Infeasible(String),

    /// All adversary models were falsified by the data: the lumped
    /// disturbance bound is too small for the observed samples.
    #[error("all models falsified at sample {sample_index}: {reason}")]
    Falsification { sample_index: usize, reason: String },

    #[error("no common quadratic certificate over the uncertainty set: {0}")]
    RobustInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("at iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            already @ Error::AtIteration { .. } => already,
            other => Error::AtIteration {
                iteration,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with iteration context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> u8 {
        match self.root() {
            Error::Falsification { .. } | Error::Infeasible(_) => 3,
            Error::RobustInfeasible(_) => 4,
            Error::Divergence { .. } => 5,
            Error::Config(_) | Error::Toml(_) | Error::Input(_) => 2,
            _ => 1,
        }
    }
}

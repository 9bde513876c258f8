use thiserror::Error;

/// Errors raised while building or transforming a plant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("plant not partitionable: lower {n_u}x{n_u} block of the input matrix is singular")]
    NotPartitionable { n_u: usize },
    #[error("(A, B) is not controllable (controllability rank {rank} < {n})")]
    Uncontrollable { rank: usize, n: usize },
}

/// Errors raised by the offline surface design.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("surface design needs at least one unactuated state (n_x - n_u = 0)")]
    NoUnactuatedStates,
    #[error("infeasible within iteration budget: best max eigenvalue {best_max_eig:e} (need < {required:e})")]
    Infeasible { best_max_eig: f64, required: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Errors raised by the nonlinear equation solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("residual is not finite at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("invalid solver options: {0}")]
    Options(String),
}

/// Errors raised by the sliding-mode controllers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("band undefined: sqrt(n_u)*xi_t = {lhs} must exceed delta_bar = {delta_bar}")]
    BandUndefined { lhs: f64, delta_bar: f64 },
    #[error("invalid reaching parameters: {0}")]
    Params(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Errors raised by the experiment harness.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed or inconsistent configuration. `key` names the offending entry.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },
}

impl HarnessError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. })
    }
}

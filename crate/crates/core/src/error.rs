use thiserror::Error;

/// Errors raised by the geometry, flow and diagnostics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("convexity lost at grid point {index}: principal radius {radius:e} <= floor {floor:e}")]
    ConvexityLost {
        index: usize,
        radius: f64,
        floor: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("out of projection domain: {0}")]
    OutOfDomain(String),
    #[error("body is not star-shaped about its center (angle order breaks at sample {0})")]
    NotStarShaped(usize),
    #[error("psi = {value:e} at grid point {index} outside [1/A, A] with A = {bound:e}")]
    PsiBoundViolated { index: usize, value: f64, bound: f64 },
    #[error("flow stalled at tau = {tau:e}: {reason}")]
    StalledFlow { tau: f64, reason: String },
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("point is not interior: shifted support {min_value:e} at grid point {index}")]
    PointNotInterior { index: usize, min_value: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("config error {}, key `{key}`: {message}", config_origin(*.line))]
    Config {
        /// Line in the config file; 0 for command-line flags.
        key: String,
        line: usize,
        message: String,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

fn config_origin(line: usize) -> String {
    if line == 0 {
        "on the command line".to_owned()
    } else {
        format!("at line {line}")
    }
}

impl FlowError {
    pub(crate) fn config(key: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        FlowError::Config {
            key: key.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for this error class.
    ///
    /// 2 config, 3 convexity, 4 domain, 5 stall; everything else maps to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            FlowError::Config { .. } | FlowError::Parse(_) | FlowError::InvalidGrid(_) => 2,
            FlowError::ConvexityLost { .. } => 3,
            FlowError::OutOfDomain(_)
            | FlowError::PsiBoundViolated { .. }
            | FlowError::NotStarShaped(_)
            | FlowError::PointNotInterior { .. } => 4,
            FlowError::StalledFlow { .. } => 5,
            FlowError::NonFinite(_)
            | FlowError::InsufficientData { .. }
            | FlowError::NoConvergence { .. }
            | FlowError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for FlowError {
    fn from(e: std::io::Error) -> Self {
        FlowError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;

use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("branch {index} has zero series impedance")]
    DegenerateBranch { index: usize },

    #[error("power flow diverged after {iterations} iterations (residual {residual:e})")]
    Diverged { iterations: usize, residual: f64 },

    #[error("power flow Jacobian is singular")]
    SingularJacobian,

    #[error("singular linear system (pivot {pivot})")]
    SingularSystem { pivot: usize },

    #[error("estimator did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("true voltage at bus {bus} is zero")]
    ZeroVoltageTruth { bus: u32 },

    #[error("voltage magnitude must be positive, got {0}")]
    ZeroVoltage(f64),

    #[error("device/bus index mismatch: {0}")]
    IndexMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("Monte Carlo aborted: {failed} of {total} samples failed")]
    McAborted { failed: usize, total: usize },

    #[error("{0} self-test checks failed")]
    SelftestFailed(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::SingularJacobian
                | Error::SingularSystem { .. }
                | Error::NotConverged { .. }
                | Error::McAborted { .. }
                | Error::DegenerateBranch { .. }
                | Error::SelftestFailed(_)
        )
    }

    /// Process exit code: 1 usage/configuration, 2 numerical, 3 data or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            e if e.is_numerical() => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

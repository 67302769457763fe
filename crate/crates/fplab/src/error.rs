//! Error type shared by all layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Coefficients were built against a different basis than the one the
    /// operation received.
    #[error("basis mismatch: coefficients tagged {coeffs:#x} vs basis {basis:#x}")]
    BasisMismatch { coeffs: u64, basis: u64 },

    /// A coefficient vector is longer than the spectrum or basis can carry.
    #[error("coefficient length {got} exceeds the available {available} modes")]
    LengthMismatch { got: usize, available: usize },

    /// Projection rank outside `1..=len`.
    #[error("projection rank must lie in 1..={len}, got {n}")]
    InvalidProjection { n: usize, len: usize },

    /// Torus evaluation grid too coarse for the active frequencies.
    #[error(
        "evaluation grid of {got} points per axis is too coarse: \
         max active frequency {freq} needs at least {need}"
    )]
    GridTooCoarse { got: usize, need: usize, freq: i64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The integrator produced a non-finite state or exceeded the ceiling.
    #[error("numerical blow-up at t = {time}: {what}")]
    BlowUp { time: f64, what: String },

    /// Solver and noise ensemble disagree on the damping shift.
    #[error("damping shift mismatch: solver lambda = {solver}, ensemble lambda = {noise}")]
    LambdaMismatch { solver: f64, noise: f64 },

    #[error("calibration failed on grid: {0}")]
    CalibrationFailed(String),

    #[error("exponential moment numerically divergent: {0}")]
    ExponentialMomentDivergent(String),

    /// Configuration rejected; each line names the violated condition.
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    ConfigInvalid(Vec<String>),

    /// Stored artifact does not match its manifest entry.
    #[error("artifact integrity: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    /// Process exit code for the CLI: 2 for rejected configurations, 3 for
    /// numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigInvalid(_) => 2,
            Error::BlowUp { .. }
            | Error::CalibrationFailed(_)
            | Error::ExponentialMomentDivergent(_)
            | Error::Integrity(_) => 3,
            _ => 1,
        }
    }
}

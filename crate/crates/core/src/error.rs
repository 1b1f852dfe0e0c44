use alloc::string::String;

/// Errors produced by the teleoperation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{name} = {value} is outside (0, 1]")]
    ScalingOutOfRange { name: &'static str, value: f64 },

    #[error("expected {expected} joint values, got {actual}")]
    DofMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("quaternion has zero norm")]
    ZeroNorm,

    #[error("matrix is not a proper rotation")]
    InvalidRotation,

    #[error("euler angle {name} = {value} is outside its range")]
    EulerOutOfRange { name: &'static str, value: f64 },

    #[error("invalid kinematic model: {0}")]
    InvalidModel(String),

    #[error("hand calibration: {0}")]
    Uncalibrated(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

//! Scalar math routed through `libm` so every platform computes the same bits.

use core::f64::consts::{PI, TAU};

pub use libm::{atan2, cos, hypot, log, sin, sqrt};

/// Wraps an angle into (−π, π]. Angles already in range are returned unchanged.
pub fn wrap_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle + 0.0;
    }
    canonical_angle(libm::remainder(angle, TAU))
}

/// Maps −π to π and −0 to +0 so angle outputs have one representation.
pub(crate) fn canonical_angle(angle: f64) -> f64 {
    if angle == -PI {
        PI
    } else {
        angle + 0.0
    }
}

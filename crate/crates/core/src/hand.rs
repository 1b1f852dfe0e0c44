//! Exoskeleton-to-dexterous-hand retargeting.
//!
//! Six encoders are read from the glove. The thumb drives the two thumb
//! channels; the index finger's fingertip angle drives the index, middle,
//! ring and pinky channels together (one virtual finger).
//!
//! Encoder layout:
//!
//! | index | joint                       |
//! |-------|-----------------------------|
//! | 0     | thumb base rotation         |
//! | 1     | thumb proximal flexion      |
//! | 2     | thumb distal flexion        |
//! | 3     | index proximal flexion      |
//! | 4     | index distal flexion        |
//! | 5     | index abduction (unused)    |

use alloc::format;

use crate::error::{Error, Result};
use crate::math::{atan2, cos, hypot, sin};

pub const ENCODER_COUNT: usize = 6;
pub const THUMB_ROTATION: usize = 0;
pub const THUMB_PROXIMAL: usize = 1;
pub const THUMB_DISTAL: usize = 2;
pub const INDEX_PROXIMAL: usize = 3;
pub const INDEX_DISTAL: usize = 4;
pub const INDEX_ABDUCTION: usize = 5;

/// Channel order of [`HandTarget`].
pub const CHANNEL_NAMES: [&str; 6] = ["thumb_bend", "thumb_rotation", "index", "middle", "ring", "pinky"];

/// Dihedral angle between the thumb's flexion plane and the metacarpal plane.
pub const DEFAULT_THUMB_TILT: f64 = core::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExoskeletonReading {
    /// radians, see the module table for the layout
    pub encoders: [f64; ENCODER_COUNT],
}

impl ExoskeletonReading {
    pub fn new(encoders: [f64; ENCODER_COUNT]) -> Result<Self> {
        if encoders.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("exoskeleton reading"));
        }
        Ok(Self { encoders })
    }
}

/// Normalized hand command, every channel in [0, 1] (0 = open).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HandTarget(pub [f64; 6]);

impl HandTarget {
    pub const THUMB_BEND: usize = 0;
    pub const THUMB_ROTATION: usize = 1;
    pub const INDEX: usize = 2;
    pub const MIDDLE: usize = 3;
    pub const RING: usize = 4;
    pub const PINKY: usize = 5;

    pub fn new(channels: [f64; 6]) -> Result<Self> {
        if channels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hand target"));
        }
        Ok(Self(channels.map(|v| v.clamp(0.0, 1.0))))
    }

    pub fn channels(&self) -> &[f64; 6] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneAngle {
    pub angle: f64,
    /// The fingertip coincides with the finger base; `angle` is reported as 0.
    pub degenerate: bool,
}

/// Angle between the base→fingertip segment of a planar two-joint finger and
/// the metacarpal plane, when the finger flexes perpendicular to that plane.
pub fn fingertip_plane_angle(joint1: f64, joint2: f64, links: [f64; 2]) -> PlaneAngle {
    let (x, y) = fingertip(joint1, joint2, links);
    if hypot(x, y) < 1e-12 {
        return PlaneAngle {
            angle: 0.0,
            degenerate: true,
        };
    }
    PlaneAngle {
        angle: atan2(y, x),
        degenerate: false,
    }
}

/// Same as [`fingertip_plane_angle`] for a finger whose flexion plane meets the
/// metacarpal plane at dihedral angle `tilt` instead of a right angle.
pub fn tilted_fingertip_plane_angle(
    joint1: f64,
    joint2: f64,
    links: [f64; 2],
    tilt: f64,
) -> PlaneAngle {
    let (x, y) = fingertip(joint1, joint2, links);
    if hypot(x, y) < 1e-12 {
        return PlaneAngle {
            angle: 0.0,
            degenerate: true,
        };
    }
    // Flexion direction split into its in-plane and out-of-plane parts.
    let out_of_plane = y * sin(tilt);
    let in_plane = hypot(x, y * cos(tilt));
    PlaneAngle {
        angle: atan2(out_of_plane, in_plane),
        degenerate: false,
    }
}

fn fingertip(joint1: f64, joint2: f64, links: [f64; 2]) -> (f64, f64) {
    let x = links[0] * cos(joint1) + links[1] * cos(joint1 + joint2);
    let y = links[0] * sin(joint1) + links[1] * sin(joint1 + joint2);
    (x, y)
}

/// Per-user endpoints and finger geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandCalibration {
    /// Encoder angles with the hand fully open, radians.
    pub open: [f64; ENCODER_COUNT],
    /// Encoder angles with the hand fully closed, radians.
    pub closed: [f64; ENCODER_COUNT],
    /// Proximal and distal link lengths, meters.
    pub thumb_links: [f64; 2],
    pub index_links: [f64; 2],
    /// radians
    pub thumb_tilt: f64,
}

/// Encoders that feed a hand channel; the abduction encoder is carried but unused.
const DRIVING_ENCODERS: [usize; 5] = [
    THUMB_ROTATION,
    THUMB_PROXIMAL,
    THUMB_DISTAL,
    INDEX_PROXIMAL,
    INDEX_DISTAL,
];

impl HandCalibration {
    pub fn new(open: [f64; ENCODER_COUNT], closed: [f64; ENCODER_COUNT]) -> Result<Self> {
        let calib = Self {
            open,
            closed,
            thumb_links: [0.045, 0.035],
            index_links: [0.045, 0.030],
            thumb_tilt: DEFAULT_THUMB_TILT,
        };
        calib.validate()?;
        Ok(calib)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .open
            .iter()
            .chain(&self.closed)
            .chain(&self.thumb_links)
            .chain(&self.index_links)
            .chain(core::iter::once(&self.thumb_tilt))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Uncalibrated("non-finite calibration value".into()));
        }
        for i in DRIVING_ENCODERS {
            if self.open[i] == self.closed[i] {
                return Err(Error::Uncalibrated(format!(
                    "encoder {i}: open and closed endpoints are identical ({})",
                    self.open[i]
                )));
            }
        }
        if self.thumb_links.iter().chain(&self.index_links).any(|&l| l <= 0.0) {
            return Err(Error::Uncalibrated("link lengths must be positive".into()));
        }
        let (lo, hi) = self.thumb_bend_range();
        if lo == hi {
            return Err(Error::Uncalibrated("thumb fingertip angle does not change between endpoints".into()));
        }
        let (lo, hi) = self.index_range();
        if lo == hi {
            return Err(Error::Uncalibrated("index fingertip angle does not change between endpoints".into()));
        }
        Ok(())
    }

    fn thumb_angle(&self, encoders: &[f64; ENCODER_COUNT]) -> f64 {
        tilted_fingertip_plane_angle(
            encoders[THUMB_PROXIMAL],
            encoders[THUMB_DISTAL],
            self.thumb_links,
            self.thumb_tilt,
        )
        .angle
    }

    fn index_angle(&self, encoders: &[f64; ENCODER_COUNT]) -> f64 {
        fingertip_plane_angle(encoders[INDEX_PROXIMAL], encoders[INDEX_DISTAL], self.index_links)
            .angle
    }

    /// Fingertip-plane angle of the thumb at the (open, closed) endpoints.
    pub fn thumb_bend_range(&self) -> (f64, f64) {
        (self.thumb_angle(&self.open), self.thumb_angle(&self.closed))
    }

    /// Fingertip-plane angle of the index at the (open, closed) endpoints.
    pub fn index_range(&self) -> (f64, f64) {
        (self.index_angle(&self.open), self.index_angle(&self.closed))
    }

    /// Clamps each encoder into its calibrated interval.
    pub fn clamp_reading(&self, reading: &ExoskeletonReading) -> [f64; ENCODER_COUNT] {
        let mut out = reading.encoders;
        for (i, value) in out.iter_mut().enumerate() {
            let (lo, hi) = ordered(self.open[i], self.closed[i]);
            *value = value.clamp(lo, hi);
        }
        out
    }
}

fn ordered(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Affine map sending `open` to 0 and `closed` to 1, clamped to [0, 1].
pub fn normalize(value: f64, open: f64, closed: f64) -> f64 {
    ((value - open) / (closed - open)).clamp(0.0, 1.0)
}

pub fn retarget(reading: &ExoskeletonReading, calib: &HandCalibration) -> Result<HandTarget> {
    calib.validate()?;
    if reading.encoders.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("exoskeleton reading"));
    }
    let enc = calib.clamp_reading(reading);

    let (thumb_open, thumb_closed) = calib.thumb_bend_range();
    let thumb_bend = normalize(calib.thumb_angle(&enc), thumb_open, thumb_closed);
    let thumb_rotation = normalize(
        enc[THUMB_ROTATION],
        calib.open[THUMB_ROTATION],
        calib.closed[THUMB_ROTATION],
    );
    let (index_open, index_closed) = calib.index_range();
    let finger = normalize(calib.index_angle(&enc), index_open, index_closed);

    Ok(HandTarget([thumb_bend, thumb_rotation, finger, finger, finger, finger]))
}

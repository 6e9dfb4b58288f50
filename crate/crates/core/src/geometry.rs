//! Planar points, vehicle poses and the frame transforms between the global
//! map frame and the vehicle frame.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates counter-clockwise about the origin.
    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Vehicle pose in the global frame. The heading is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }

    /// Applies a motion expressed in this pose's vehicle frame.
    pub fn compose(&self, delta: Motion) -> Pose2 {
        let step = Point2::new(delta.dx, delta.dy).rotated(self.heading);
        Pose2::new(self.x + step.x, self.y + step.y, self.heading + delta.dtheta)
    }

    /// The motion that takes `self` to `next`, in `self`'s vehicle frame.
    pub fn motion_to(&self, next: &Pose2) -> Motion {
        let d = (next.position() - self.position()).rotated(-self.heading);
        Motion {
            dx: d.x,
            dy: d.y,
            dtheta: normalize_angle(next.heading - self.heading),
        }
    }
}

/// Relative planar motion `(dx, dy, dθ)` in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Motion {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Motion {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }
}

fn check_finite(pose: &Pose2, p: Point2) -> Result<()> {
    if !pose.is_finite() {
        return Err(Error::NonFinite("pose"));
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("point"));
    }
    Ok(())
}

/// Vehicle frame to global frame: rotate by the heading, then translate.
pub fn to_global(pose: &Pose2, local: Point2) -> Result<Point2> {
    check_finite(pose, local)?;
    Ok(local.rotated(pose.heading) + pose.position())
}

/// Global frame to vehicle frame; the exact inverse of [`to_global`].
pub fn to_vehicle(pose: &Pose2, global: Point2) -> Result<Point2> {
    check_finite(pose, global)?;
    Ok((global - pose.position()).rotated(-pose.heading))
}

/// Discretisation of the full circle into equal angular bins.
///
/// Bin indices follow the visibility-vector convention: the angle is taken
/// from the feature towards the vehicle, rounded to whole bins and shifted by
/// half a turn. The index for the full turn wraps back to zero, so there are
/// exactly `count` bins. For a point `p` given relative to the vehicle this
/// collapses to the bearing of `p` as seen from the vehicle, so the same bin
/// indexes both visibility vectors and ray-cast scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularBins {
    count: usize,
}

impl Default for AngularBins {
    fn default() -> Self {
        Self { count: 360 }
    }
}

impl AngularBins {
    pub fn from_resolution_deg(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg.is_finite() && resolution_deg > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "angular resolution {resolution_deg} must be positive"
            )));
        }
        let count = (360.0 / resolution_deg).round();
        if (count * resolution_deg - 360.0).abs() > 1e-9 || !(count as usize).is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "angular resolution {resolution_deg} must split the circle into an even number of bins"
            )));
        }
        Ok(Self {
            count: count as usize,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn resolution_deg(&self) -> f64 {
        360.0 / self.count as f64
    }

    /// Centre angle of a bin, measured as a bearing from the vehicle.
    pub fn bearing(&self, bin: usize) -> f64 {
        normalize_angle((bin as f64 * self.resolution_deg()).to_radians())
    }

    pub fn to_polar(&self, offset: Point2) -> Result<Polar> {
        if !offset.is_finite() {
            return Err(Error::NonFinite("point"));
        }
        if offset.x == 0.0 && offset.y == 0.0 {
            return Err(Error::ZeroVector);
        }
        // (vehicle - feature) = -offset
        let angle = (-offset.y).atan2(-offset.x);
        let steps = (angle.to_degrees() / self.resolution_deg()).round() as i64;
        let bin = (steps + self.count as i64 / 2).rem_euclid(self.count as i64) as usize;
        Ok(Polar {
            range: offset.norm(),
            bin,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polar {
    pub range: f64,
    pub bin: usize,
}

/// Range and one-degree bin of a feature offset from the vehicle.
pub fn to_polar(offset: Point2) -> Result<Polar> {
    AngularBins::default().to_polar(offset)
}

//! Closed test route: a rectangle with rounded corners, driven
//! counter-clockwise. Positive lateral offsets lie to the left of the
//! direction of travel, i.e. towards the inside of the loop.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::localization::{DrivableAreas, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Route {
    /// Half length of the inner rectangle along x.
    pub half_x: f64,
    /// Half length of the inner rectangle along y.
    pub half_y: f64,
    pub corner_radius: f64,
}

impl Default for Route {
    fn default() -> Self {
        Self {
            half_x: 250.0,
            half_y: 125.0,
            corner_radius: 40.0,
        }
    }
}

/// One piece of the route: a straight or a quarter arc.
#[derive(Debug, Clone, Copy)]
enum Piece {
    Straight { from: Point2, heading: f64, length: f64 },
    Arc { centre: Point2, start_angle: f64 },
}

impl Route {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_x >= 0.0 && self.half_y >= 0.0 && self.corner_radius > 0.0) {
            return Err(Error::InvalidConfig("route dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        4.0 * (self.half_x + self.half_y) + TAU * self.corner_radius
    }

    fn pieces(&self) -> [(Piece, f64); 9] {
        let (a, b, r) = (self.half_x, self.half_y, self.corner_radius);
        let arc = r * FRAC_PI_2;
        let straight = |x, y, heading, length| Piece::Straight {
            from: Point2::new(x, y),
            heading,
            length,
        };
        let corner = |x, y, start_angle| Piece::Arc {
            centre: Point2::new(x, y),
            start_angle,
        };
        [
            (straight(0.0, -b - r, 0.0, a), a),
            (corner(a, -b, -FRAC_PI_2), arc),
            (straight(a + r, -b, FRAC_PI_2, 2.0 * b), 2.0 * b),
            (corner(a, b, 0.0), arc),
            (straight(a, b + r, PI, 2.0 * a), 2.0 * a),
            (corner(-a, b, FRAC_PI_2), arc),
            (straight(-a - r, b, -FRAC_PI_2, 2.0 * b), 2.0 * b),
            (corner(-a, -b, PI), arc),
            (straight(-a, -b - r, 0.0, a), a),
        ]
    }

    /// Centre-line pose at arc length `s` (wrapped onto the loop), shifted
    /// sideways by `lateral`.
    pub fn pose_at(&self, s: f64, lateral: f64) -> Pose2 {
        let mut s = s.rem_euclid(self.length());
        let r = self.corner_radius;
        let pieces = self.pieces();
        for (i, (piece, len)) in pieces.iter().enumerate() {
            if s > *len && i + 1 < pieces.len() {
                s -= len;
                continue;
            }
            return match *piece {
                Piece::Straight { from, heading, length } => {
                    let t = s.min(length);
                    let dir = Point2::new(heading.cos(), heading.sin());
                    let left = Point2::new(-dir.y, dir.x);
                    let p = from + dir * t + left * lateral;
                    Pose2::new(p.x, p.y, heading)
                }
                Piece::Arc { centre, start_angle } => {
                    let phi = start_angle + s / r;
                    let radial = Point2::new(phi.cos(), phi.sin());
                    let p = centre + radial * (r - lateral);
                    Pose2::new(p.x, p.y, phi + FRAC_PI_2)
                }
            };
        }
        unreachable!("route has pieces")
    }

    pub fn point_at(&self, s: f64, lateral: f64) -> Point2 {
        self.pose_at(s, lateral).position()
    }

    /// Whether the stretch `[s, s + length]` lies on a single straight.
    pub fn is_straight(&self, s: f64, length: f64) -> bool {
        let mut s = s.rem_euclid(self.length());
        for (piece, len) in self.pieces() {
            if s < len {
                return matches!(piece, Piece::Straight { .. }) && s + length <= len;
            }
            s -= len;
        }
        false
    }

    /// Arc length of the route point closest to `p`, searched on a grid of
    /// `resolution` meters.
    pub fn project(&self, p: Point2, resolution: f64) -> f64 {
        let n = (self.length() / resolution).ceil() as usize;
        (0..n)
            .map(|i| i as f64 * resolution)
            .min_by(|a, b| {
                let da = self.point_at(*a, 0.0).distance(p);
                let db = self.point_at(*b, 0.0).distance(p);
                da.total_cmp(&db)
            })
            .unwrap_or(0.0)
    }

    /// The band of `half_width` meters around the centre line: the outer
    /// boundary as the valid polygon, the inner block as a hole.
    pub fn drivable_areas(&self, half_width: f64, spacing: f64) -> DrivableAreas {
        let n = (self.length() / spacing).ceil() as usize;
        let ring = |lateral: f64| {
            Polygon::new(
                (0..n)
                    .map(|i| self.point_at(i as f64 * self.length() / n as f64, lateral))
                    .collect(),
            )
        };
        DrivableAreas {
            valid: vec![ring(-half_width)],
            holes: vec![ring(half_width)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loop_is_continuous_and_closed() {
        let route = Route::default();
        let step = 0.5;
        let n = (route.length() / step) as usize;
        for i in 0..=n {
            let a = route.point_at(i as f64 * step, 0.0);
            let b = route.point_at((i + 1) as f64 * step, 0.0);
            assert!(a.distance(b) <= step + 1e-9, "jump at {}", i as f64 * step);
            assert!(a.distance(b) > step * 0.99);
        }
        let start = route.pose_at(0.0, 0.0);
        let end = route.pose_at(route.length() - 1e-9, 0.0);
        assert_abs_diff_eq!(start.x, end.x, epsilon = 1e-6);
        assert_abs_diff_eq!(start.y, end.y, epsilon = 1e-6);
    }

    #[test]
    fn left_is_inside() {
        let route = Route::default();
        for s in [0.0, 300.0, 700.0, 1000.0, 1400.0] {
            let inner = route.point_at(s, 3.0);
            let outer = route.point_at(s, -3.0);
            assert!(inner.norm() < outer.norm());
        }
    }

    #[test]
    fn band_membership() {
        let route = Route::default();
        let areas = route.drivable_areas(6.0, 2.0);
        for s in (0..100).map(|i| i as f64 * 17.3) {
            assert!(areas.is_drivable(route.point_at(s, 0.0)));
            assert!(areas.is_drivable(route.point_at(s, 4.0)));
            assert!(!areas.is_drivable(route.point_at(s, 9.0)));
            assert!(!areas.is_drivable(route.point_at(s, -9.0)));
        }
    }

    #[test]
    fn projection_finds_arc_length() {
        let route = Route::default();
        let s = route.project(route.point_at(812.0, 2.0), 1.0);
        assert_abs_diff_eq!(s, 812.0, epsilon = 1.0);
        assert!(route.is_straight(10.0, 100.0));
        assert!(!route.is_straight(240.0, 20.0));
    }
}

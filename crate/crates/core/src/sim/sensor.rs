//! Feature-level sensor: range limit, height thresholds, occlusion by
//! occluder footprints, range-dependent detection and position noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{to_vehicle, Point2, Pose2};
use crate::map::{FeatureKind, Observation};
use crate::sim::world::{Occluder, WorldTimeline};

/// Minimum detectable heights from a given week on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightStep {
    pub from_week: u32,
    pub pole: f64,
    pub corner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub max_range: f64,
    /// Detection probability up to `near_range`.
    pub p_near: f64,
    pub near_range: f64,
    /// Detection probability at `max_range`; linear in between.
    pub p_far: f64,
    pub position_sigma: f64,
    pub height_sigma: f64,
    /// Height of the line of sight above ground; only occluders at least
    /// this tall block it.
    pub sightline_height: f64,
    /// Spacing of synthetic occluder surface points, meters.
    pub point_spacing: f64,
    pub heights: Vec<HeightStep>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_range: 30.0,
            p_near: 0.95,
            near_range: 20.0,
            p_far: 0.5,
            position_sigma: 0.05,
            height_sigma: 0.02,
            sightline_height: 1.0,
            point_spacing: 0.2,
            heights: vec![
                HeightStep { from_week: 0, pole: 1.6, corner: 1.8 },
                HeightStep { from_week: 3, pole: 1.6, corner: 1.5 },
                HeightStep { from_week: 5, pole: 1.5, corner: 1.5 },
                HeightStep { from_week: 7, pole: 1.4, corner: 1.5 },
                HeightStep { from_week: 9, pole: 1.4, corner: 1.4 },
            ],
        }
    }
}

impl DetectorConfig {
    /// `(pole, corner)` minimum heights in `week`.
    pub fn min_heights(&self, week: u32) -> (f64, f64) {
        self.heights
            .iter()
            .filter(|h| h.from_week <= week)
            .max_by_key(|h| h.from_week)
            .map_or((0.0, 0.0), |h| (h.pole, h.corner))
    }

    pub fn min_height(&self, kind: FeatureKind, week: u32) -> f64 {
        let (pole, corner) = self.min_heights(week);
        match kind {
            FeatureKind::Pole => pole,
            FeatureKind::Corner => corner,
        }
    }

    pub fn detection_probability(&self, range: f64) -> f64 {
        if range > self.max_range {
            0.0
        } else if range <= self.near_range {
            self.p_near
        } else {
            let t = (range - self.near_range) / (self.max_range - self.near_range);
            self.p_near + t * (self.p_far - self.p_near)
        }
    }
}

/// Whether the segment `a`–`b` touches the convex quadrilateral `quad`.
pub fn segment_hits_quad(a: Point2, b: Point2, quad: &[Point2; 4]) -> bool {
    // Clip the segment parameter against each edge's inside half-plane.
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..4 {
        let p = quad[i];
        let q = quad[(i + 1) % 4];
        let e = q - p;
        // Inside is to the left of a counter-clockwise edge.
        let num = e.x * (a.y - p.y) - e.y * (a.x - p.x);
        let den = e.x * d.y - e.y * d.x;
        if den == 0.0 {
            if num < 0.0 {
                return false;
            }
            continue;
        }
        let t = -num / den;
        if den > 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Ground-truth visibility of a point from `from`, ignoring range.
pub fn line_of_sight(from: Point2, to: Point2, occluders: &[&Occluder], t: f64, sightline: f64) -> bool {
    occluders
        .iter()
        .filter(|o| o.height >= sightline)
        .all(|o| !segment_hits_quad(from, to, &o.corners(t)))
}

/// Synthetic surface points of the occluders, in the vehicle frame, kept
/// within `radius` of the vehicle.
pub fn occluder_points(pose: &Pose2, occluders: &[&Occluder], t: f64, spacing: f64, radius: f64) -> Vec<[f64; 3]> {
    let mut points = Vec::new();
    for o in occluders {
        if o.pose_at(t).position().distance(pose.position()) > radius + o.length {
            continue;
        }
        let corners = o.corners(t);
        for i in 0..4 {
            let (p, q) = (corners[i], corners[(i + 1) % 4]);
            let n = (p.distance(q) / spacing).ceil().max(1.0) as usize;
            for k in 0..n {
                let g = p + (q - p) * (k as f64 / n as f64);
                let Ok(local) = to_vehicle(pose, g) else { continue };
                if local.x.abs() > radius || local.y.abs() > radius {
                    continue;
                }
                points.push([local.x, local.y, 0.0]);
                points.push([local.x, local.y, o.height]);
            }
        }
    }
    points
}

/// What the sensor reports from `pose` at time `t` of `week`.
pub fn sense(
    world: &WorldTimeline,
    week: u32,
    pose: &Pose2,
    t: f64,
    detector: &DetectorConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<Observation>, Vec<[f64; 3]>) {
    let occluders: Vec<&Occluder> = world.occluders_in(week).collect();
    let noise = Normal::new(0.0, detector.position_sigma.max(0.0)).expect("finite sigma");
    let height_noise = Normal::new(0.0, detector.height_sigma.max(0.0)).expect("finite sigma");
    let mut observations = Vec::new();
    for f in world.alive(week) {
        let range = f.position.distance(pose.position());
        if range > detector.max_range || range == 0.0 {
            continue;
        }
        if !(f.height > detector.min_height(f.kind, week)) {
            continue;
        }
        if !line_of_sight(pose.position(), f.position, &occluders, t, detector.sightline_height) {
            continue;
        }
        // Draw the noise even for misses so one feature's luck does not
        // shift every later draw.
        let detected = rng.random_bool(detector.detection_probability(range));
        let (nx, ny, nh) = (noise.sample(rng), noise.sample(rng), height_noise.sample(rng));
        if !detected {
            continue;
        }
        let Ok(local) = to_vehicle(pose, f.position) else { continue };
        observations.push(Observation {
            position: local + Point2::new(nx, ny),
            kind: f.kind,
            height: (f.height + nh).max(0.01),
            geom_param: f.geom_param,
            label: f.label,
        });
    }
    let radius = detector.max_range;
    let points = occluder_points(pose, &occluders, t, detector.point_spacing, radius);
    (observations, points)
}

//! Map-matching pose filter.
//!
//! A small extended Kalman filter over `(x, y, heading)`. Odometry drives the
//! prediction; the rigid transform found by aligning observations against the
//! map is applied to the current estimate and the result is fused as a direct
//! pose measurement. GNSS fixes are only used to (re)initialise.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Motion, Point2, Pose2};
use crate::matcher::MatchResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationConfig {
    /// Minimum speed for heading initialisation from two fixes, m/s.
    pub min_init_speed: f64,
    /// Minimum separation of the two fixes used for initialisation, meters.
    pub min_init_baseline: f64,
    pub lateral_threshold: f64,
    pub min_pairs: usize,
    /// Translational odometry noise per meter travelled.
    pub odometry_sigma_per_m: f64,
    /// Heading odometry noise per meter travelled, radians.
    pub heading_sigma_per_m: f64,
    /// Noise floor added at every prediction.
    pub process_floor: f64,
    pub measurement_sigma_xy: f64,
    pub measurement_sigma_heading: f64,
    pub init_sigma_xy: f64,
    pub init_sigma_heading: f64,
    /// While the position is uncertain the association gate widens to this
    /// many position standard deviations, never below the matcher's gate.
    pub gate_sigma_scale: f64,
    pub max_gate: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            min_init_speed: 3.0,
            min_init_baseline: 20.0,
            lateral_threshold: 0.5,
            min_pairs: 3,
            odometry_sigma_per_m: 0.02,
            heading_sigma_per_m: 0.0005,
            process_floor: 1e-6,
            measurement_sigma_xy: 0.15,
            measurement_sigma_heading: 0.01,
            init_sigma_xy: 0.5,
            init_sigma_heading: 0.05,
            gate_sigma_scale: 2.0,
            max_gate: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub pose: Pose2,
    pub covariance: Matrix3<f64>,
    pub initialized: bool,
    pub reset_count: u32,
    pub strong_correction_count: u32,
}

impl Default for FilterState {
    fn default() -> Self {
        Self {
            pose: Pose2::default(),
            covariance: Matrix3::identity() * 1e6,
            initialized: false,
            reset_count: 0,
            strong_correction_count: 0,
        }
    }
}

impl FilterState {
    /// A filter started at `pose` with the configured initial uncertainty.
    pub fn initialized_at(pose: Pose2, config: &LocalizationConfig) -> Self {
        let mut state = Self::default();
        state.start(pose, config);
        state
    }

    fn start(&mut self, pose: Pose2, config: &LocalizationConfig) {
        let (sxy, sh) = (config.init_sigma_xy, config.init_sigma_heading);
        self.pose = pose;
        self.covariance = Matrix3::from_diagonal(&Vector3::new(sxy * sxy, sxy * sxy, sh * sh));
        self.initialized = true;
    }

    /// Largest positional standard deviation.
    pub fn position_sigma(&self) -> f64 {
        self.covariance[(0, 0)].max(self.covariance[(1, 1)]).sqrt()
    }
}

/// Heading from two consecutive GNSS fixes. `None` while the vehicle is too
/// slow or the fixes coincide.
pub fn init_heading(fix1: Point2, fix2: Point2, speed: f64, min_speed: f64) -> Option<Pose2> {
    let d = fix2 - fix1;
    if !(speed > min_speed) || d.norm() == 0.0 {
        return None;
    }
    Some(Pose2::new(fix2.x, fix2.y, d.y.atan2(d.x)))
}

/// Starts the filter from two fixes when [`init_heading`] allows it.
pub fn try_initialize(
    state: &mut FilterState,
    fix1: Point2,
    fix2: Point2,
    speed: f64,
    config: &LocalizationConfig,
) -> bool {
    match init_heading(fix1, fix2, speed, config.min_init_speed) {
        Some(pose) => {
            state.start(pose, config);
            true
        }
        None => false,
    }
}

pub fn predict(state: &mut FilterState, delta: Motion, config: &LocalizationConfig) {
    let (s, c) = state.pose.heading.sin_cos();
    let f = Matrix3::new(
        1.0, 0.0, -s * delta.dx - c * delta.dy,
        0.0, 1.0, c * delta.dx - s * delta.dy,
        0.0, 0.0, 1.0,
    );
    let g = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let dist = delta.dx.hypot(delta.dy);
    let st = config.odometry_sigma_per_m * dist;
    let sh = config.heading_sigma_per_m * dist;
    let q = Matrix3::from_diagonal(&Vector3::new(st * st, st * st, sh * sh))
        + Matrix3::identity() * config.process_floor;
    state.pose = state.pose.compose(delta);
    state.covariance = f * state.covariance * f.transpose() + g * q * g.transpose();
}

/// Global-frame change applied to the pose by one correction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Correction {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl Correction {
    /// Component perpendicular to `heading`.
    pub fn lateral(&self, heading: f64) -> f64 {
        -heading.sin() * self.dx + heading.cos() * self.dy
    }
}

/// Fuses the aligned pose as a measurement. Unconverged alignments and those
/// with too few pairs are ignored.
pub fn correct(
    state: &mut FilterState,
    alignment: &MatchResult,
    config: &LocalizationConfig,
) -> Option<Correction> {
    if !state.initialized || !alignment.converged || alignment.matched.len() < config.min_pairs {
        return None;
    }
    let measured = alignment.transform.apply_pose(&state.pose);
    let innovation = Vector3::new(
        measured.x - state.pose.x,
        measured.y - state.pose.y,
        normalize_angle(measured.heading - state.pose.heading),
    );
    let (sxy, sh) = (config.measurement_sigma_xy, config.measurement_sigma_heading);
    let r = Matrix3::from_diagonal(&Vector3::new(sxy * sxy, sxy * sxy, sh * sh));
    let p = state.covariance;
    let s_inv = (p + r).try_inverse()?;
    let k = p * s_inv;
    let step = k * innovation;
    let i_k = Matrix3::identity() - k;
    // Joseph form keeps the covariance symmetric positive semidefinite.
    let updated = i_k * p * i_k.transpose() + k * r * k.transpose();
    state.covariance = (updated + updated.transpose()) * 0.5;
    state.pose = Pose2::new(
        state.pose.x + step[0],
        state.pose.y + step[1],
        state.pose.heading + step[2],
    );
    Some(Correction {
        dx: step[0],
        dy: step[1],
        dtheta: step[2],
    })
}

/// Counts the correction as strong if its lateral part, relative to the
/// heading it was applied to, exceeds the threshold.
pub fn count_strong_correction(
    state: &mut FilterState,
    correction: Correction,
    heading: f64,
    lateral_threshold: f64,
) -> bool {
    let strong = correction.lateral(heading).abs() > lateral_threshold;
    if strong {
        state.strong_correction_count += 1;
    }
    strong
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    /// Even-odd crossing test. Points exactly on an edge may land either way.
    pub fn contains(&self, p: Point2) -> bool {
        let v = &self.vertices;
        let mut inside = false;
        let mut j = v.len().wrapping_sub(1);
        for i in 0..v.len() {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DrivableAreas {
    pub valid: Vec<Polygon>,
    pub holes: Vec<Polygon>,
}

impl DrivableAreas {
    pub fn is_drivable(&self, p: Point2) -> bool {
        self.valid.iter().any(|poly| poly.contains(p)) && !self.holes.iter().any(|h| h.contains(p))
    }
}

/// Drops the filter back to uninitialised when its estimate leaves the
/// drivable area. Returns whether a reset happened.
pub fn check_reset(state: &mut FilterState, areas: &DrivableAreas) -> bool {
    if !state.initialized || areas.is_drivable(state.pose.position()) {
        return false;
    }
    state.initialized = false;
    state.reset_count += 1;
    state.covariance = Matrix3::identity() * 1e6;
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::RigidTransform2;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, TAU};

    #[test]
    fn heading_from_fixes() {
        let o = Point2::ORIGIN;
        let pose = init_heading(o, Point2::new(1.0, 0.0), 4.0, 3.0).unwrap();
        assert_eq!(pose.heading, 0.0);
        assert_eq!(init_heading(o, Point2::new(1.0, 0.0), 2.0, 3.0), None);
        let pose = init_heading(o, Point2::new(0.0, 2.0), 4.0, 3.0).unwrap();
        assert_abs_diff_eq!(pose.heading, FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(init_heading(o, o, 10.0, 3.0), None);
    }

    #[test]
    fn prediction_composes_and_grows() {
        let cfg = LocalizationConfig::default();
        let mut s = FilterState::initialized_at(Pose2::new(0.0, 0.0, 0.0), &cfg);
        let trace = s.covariance.trace();
        predict(&mut s, Motion::new(1.0, 0.0, 0.0), &cfg);
        assert_eq!(s.pose, Pose2::new(1.0, 0.0, 0.0));
        assert!(s.covariance.trace() > trace);

        let mut s = FilterState::initialized_at(Pose2::new(0.0, 0.0, FRAC_PI_2), &cfg);
        predict(&mut s, Motion::new(1.0, 0.0, 0.0), &cfg);
        assert_abs_diff_eq!(s.pose.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.pose.y, 1.0, epsilon = 1e-15);
    }

    fn matched(transform: RigidTransform2, pairs: usize) -> MatchResult {
        MatchResult {
            transform,
            matched: (0..pairs).map(|i| (crate::map::FeatureId(i as u64), i)).collect(),
            unmatched_map: vec![],
            unmatched_obs: vec![],
            converged: true,
            mean_residual: 0.0,
            residual_trace: vec![],
        }
    }

    #[test]
    fn correction_rules() {
        let cfg = LocalizationConfig::default();
        let mut s = FilterState::initialized_at(Pose2::new(5.0, 5.0, 0.3), &cfg);
        let trace = s.covariance.trace();
        let c = correct(&mut s, &matched(RigidTransform2::IDENTITY, 5), &cfg).unwrap();
        assert_eq!(s.pose, Pose2::new(5.0, 5.0, 0.3));
        assert_eq!(c, Correction::default());
        assert!(s.covariance.trace() < trace);

        let shift = RigidTransform2 { dx: 0.3, dy: 0.0, dtheta: 0.0 };
        let before = s.pose.x;
        correct(&mut s, &matched(shift, 5), &cfg).unwrap();
        assert!(s.pose.x > before && s.pose.x < before + 0.3);

        let frozen = s.clone();
        assert!(correct(&mut s, &matched(shift, 2), &cfg).is_none());
        assert_eq!(s, frozen);
        let mut unconverged = matched(shift, 5);
        unconverged.converged = false;
        assert!(correct(&mut s, &unconverged, &cfg).is_none());
    }

    #[test]
    fn strong_corrections_are_lateral() {
        let mut s = FilterState::default();
        let lateral = Correction { dx: 0.0, dy: 0.6, dtheta: 0.0 };
        assert!(count_strong_correction(&mut s, lateral, 0.0, 0.5));
        let longitudinal = Correction { dx: 0.6, dy: 0.0, dtheta: 0.0 };
        assert!(!count_strong_correction(&mut s, longitudinal, 0.0, 0.5));
        let small = Correction { dx: 0.0, dy: 0.1, dtheta: 0.0 };
        assert!(!count_strong_correction(&mut s, small, 0.0, 0.5));
        // Heading north: a global x shift is lateral.
        assert!(count_strong_correction(&mut s, longitudinal, FRAC_PI_2, 0.5));
        assert_eq!(s.strong_correction_count, 2);
    }

    fn square(c: f64, half: f64) -> Polygon {
        Polygon::new(vec![
            Point2::new(c - half, c - half),
            Point2::new(c + half, c - half),
            Point2::new(c + half, c + half),
            Point2::new(c - half, c + half),
        ])
    }

    #[test]
    fn reset_rules() {
        let areas = DrivableAreas {
            valid: vec![square(0.0, 10.0)],
            holes: vec![square(5.0, 2.0)],
        };
        let cfg = LocalizationConfig::default();
        let mut s = FilterState::initialized_at(Pose2::new(-5.0, 0.0, 0.0), &cfg);
        assert!(!check_reset(&mut s, &areas));
        s.pose = Pose2::new(5.0, 5.0, 0.0);
        assert!(check_reset(&mut s, &areas));
        assert!(!s.initialized);
        s.initialized = true;
        s.pose = Pose2::new(50.0, 0.0, 0.0);
        assert!(check_reset(&mut s, &areas));
        assert_eq!(s.reset_count, 2);
    }

    fn winding_number(poly: &Polygon, p: Point2) -> i32 {
        // Sum of signed angles subtended by the edges.
        let v = &poly.vertices;
        let mut total = 0.0;
        for i in 0..v.len() {
            let a = v[i] - p;
            let b = v[(i + 1) % v.len()] - p;
            total += (a.x * b.y - a.y * b.x).atan2(a.x * b.x + a.y * b.y);
        }
        (total / TAU).round() as i32
    }

    #[test]
    fn crossing_test_agrees_with_winding_number() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            // Star-shaped polygons around a centre are always simple.
            let n = rng.random_range(3..12);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let centre = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let poly = Polygon::new(
                angles
                    .iter()
                    .map(|a| centre + Point2::new(a.cos(), a.sin()) * rng.random_range(1.0..8.0))
                    .collect(),
            );
            let p = Point2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
            assert_eq!(poly.contains(p), winding_number(&poly, p) != 0, "{poly:?} {p:?}");
        }
        assert_eq!(winding_number(&square(0.0, 1.0), Point2::ORIGIN).abs(), 1);
    }
}

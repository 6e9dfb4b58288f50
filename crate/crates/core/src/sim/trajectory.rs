//! Weekly drives along the route with lateral jitter, noisy odometry and
//! GNSS fixes.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::drive::{DriveLog, GnssFix, Timestep};
use crate::geometry::{Motion, Pose2};
use crate::sim::sensor::{sense, DetectorConfig};
use crate::sim::world::WorldTimeline;
use crate::sim::{stream_rng, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveConfig {
    /// Distance between timesteps, meters.
    pub step: f64,
    pub speed: f64,
    /// Arc length where every drive starts.
    pub start: f64,
    /// Distance driven beyond one full loop.
    pub overlap: f64,
    pub jitter_amplitude: f64,
    pub jitter_wavelength: f64,
    pub odometry_sigma: f64,
    pub heading_sigma: f64,
    /// Systematic heading error added to every odometry step, radians.
    pub heading_bias: f64,
    pub gnss_sigma: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            speed: 5.0,
            start: 0.0,
            overlap: 80.0,
            jitter_amplitude: 0.5,
            jitter_wavelength: 180.0,
            odometry_sigma: 0.005,
            heading_sigma: 0.00025,
            heading_bias: 0.0,
            gnss_sigma: 0.3,
        }
    }
}

/// True poses and noisy odometry for one week.
pub fn generate_trajectory(world: &WorldTimeline, week: u32, config: &DriveConfig) -> (Vec<Pose2>, Vec<Motion>) {
    let mut rng = stream_rng(world.seed, week, Purpose::Trajectory);
    let phase = rng.random_range(0.0..TAU);
    let route = world.route;
    let lateral = |s: f64| {
        config.jitter_amplitude * (TAU * (s - config.start) / config.jitter_wavelength + phase).sin()
    };
    let position = |s: f64| route.point_at(s, lateral(s));
    let n = ((route.length() + config.overlap) / config.step).ceil() as usize + 1;
    let poses: Vec<Pose2> = (0..n)
        .map(|i| {
            let s = config.start + i as f64 * config.step;
            let (a, b) = (position(s - 0.05), position(s + 0.05));
            let p = position(s);
            Pose2::new(p.x, p.y, (b.y - a.y).atan2(b.x - a.x))
        })
        .collect();

    let trans = Normal::new(0.0, config.odometry_sigma.max(0.0)).expect("finite sigma");
    let rot = Normal::new(0.0, config.heading_sigma.max(0.0)).expect("finite sigma");
    let mut odometry = Vec::with_capacity(n);
    odometry.push(Motion::default());
    for w in poses.windows(2) {
        let m = w[0].motion_to(&w[1]);
        odometry.push(Motion::new(
            m.dx + trans.sample(&mut rng),
            m.dy + trans.sample(&mut rng),
            m.dtheta + rot.sample(&mut rng) + config.heading_bias,
        ));
    }
    (poses, odometry)
}

/// The complete sensor log of one weekly drive.
pub fn generate_drive(world: &WorldTimeline, week: u32, drive: &DriveConfig, detector: &DetectorConfig) -> DriveLog {
    let (poses, odometry) = generate_trajectory(world, week, drive);
    let mut sensor_rng = stream_rng(world.seed, week, Purpose::Sensor);
    let mut gnss_rng = stream_rng(world.seed, week, Purpose::Gnss);
    let gnss = Normal::new(0.0, drive.gnss_sigma.max(0.0)).expect("finite sigma");
    let dt = drive.step / drive.speed;
    let steps = poses
        .iter()
        .zip(odometry)
        .enumerate()
        .map(|(i, (pose, odometry))| {
            let t = i as f64 * dt;
            let (observations, points3d) = sense(world, week, pose, t, detector, &mut sensor_rng);
            let fix = pose.position()
                + crate::geometry::Point2::new(gnss.sample(&mut gnss_rng), gnss.sample(&mut gnss_rng));
            Timestep {
                timestamp: t,
                true_pose: Some(*pose),
                odometry,
                observations,
                points3d,
                gnss: Some(GnssFix {
                    position: fix,
                    sigma: drive.gnss_sigma,
                }),
                speed: drive.speed,
            }
        })
        .collect();
    DriveLog { week, steps }
}

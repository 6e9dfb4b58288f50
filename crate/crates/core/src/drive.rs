//! Per-drive sensor stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Motion, Point2, Pose2};
use crate::map::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub position: Point2,
    pub sigma: f64,
}

/// Everything recorded at one timestep. Points and observations are in the
/// vehicle frame of the true pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestep {
    pub timestamp: f64,
    /// Ground truth; only present in simulated logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_pose: Option<Pose2>,
    /// Measured motion since the previous timestep, in the previous vehicle frame.
    pub odometry: Motion,
    pub observations: Vec<Observation>,
    pub points3d: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnss: Option<GnssFix>,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriveLog {
    pub week: u32,
    pub steps: Vec<Timestep>,
}

impl DriveLog {
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.steps.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::InvalidDrive(format!(
                    "timestep {}: timestamps must increase",
                    i + 1
                )));
            }
        }
        for (i, s) in self.steps.iter().enumerate() {
            let m = s.odometry;
            if !(m.dx.is_finite() && m.dy.is_finite() && m.dtheta.is_finite()) {
                return Err(Error::InvalidDrive(format!("timestep {i}: non-finite odometry")));
            }
            if s.observations.iter().any(|o| !o.position.is_finite()) {
                return Err(Error::InvalidDrive(format!("timestep {i}: non-finite observation")));
            }
        }
        Ok(())
    }

    pub fn true_path(&self) -> Vec<Pose2> {
        self.steps.iter().filter_map(|s| s.true_pose).collect()
    }
}

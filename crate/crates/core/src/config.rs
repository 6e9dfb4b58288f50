//! Scenario files and pipeline thresholds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::GridEncoding;
use crate::localization::LocalizationConfig;
use crate::matcher::{IcpConfig, DEFAULT_RETRIEVAL_RADIUS};
use crate::new_features::LayerConfig;
use crate::occlusion::ObstacleGridConfig;
use crate::sensor_model::SensorModelConfig;
use crate::sim::{DetectorConfig, DriveConfig, WorldConfig};
use crate::visibility::DEFAULT_PURGE_THRESHOLD;

/// Everything the per-drive pipeline and the maintenance cycle need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaintenanceConfig {
    /// Relative visibility-volume loss above which a feature is removed.
    pub purge_threshold: f64,
    pub retrieval_radius: f64,
    /// Map maintenance only uses timesteps where the filter's positional
    /// standard deviation is below this.
    pub confident_sigma: f64,
    pub angular_resolution_deg: f64,
    pub icp: IcpConfig,
    pub layer: LayerConfig,
    pub localization: LocalizationConfig,
    pub sensor_model: SensorModelConfig,
    pub obstacle_grid: ObstacleGridConfig,
}

impl Default for MaintenanceConfig {
    fn default() -> Self {
        Self {
            purge_threshold: DEFAULT_PURGE_THRESHOLD,
            retrieval_radius: DEFAULT_RETRIEVAL_RADIUS,
            confident_sigma: 0.5,
            angular_resolution_deg: 1.0,
            icp: IcpConfig::default(),
            layer: LayerConfig::default(),
            localization: LocalizationConfig::default(),
            sensor_model: SensorModelConfig::default(),
            obstacle_grid: ObstacleGridConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// How sensor-model grids are written into map files.
    pub grid_encoding: GridEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub weeks: u32,
    /// Maintenance runs after every `cadence` drives.
    pub cadence: u32,
    /// Position noise of the initial map, meters.
    pub initial_map_sigma: f64,
    pub world: WorldConfig,
    pub drive: DriveConfig,
    pub detector: DetectorConfig,
    pub maintenance: MaintenanceConfig,
    pub output: OutputConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            weeks: 12,
            cadence: 1,
            initial_map_sigma: 0.05,
            world: WorldConfig::default(),
            drive: DriveConfig::default(),
            detector: DetectorConfig::default(),
            maintenance: MaintenanceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|span| line_column(text, span.start))
                .unwrap_or((0, 0));
            Error::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::InvalidConfig("cadence must be at least 1".into()));
        }
        if !(self.drive.step > 0.0 && self.drive.speed > 0.0) {
            return Err(Error::InvalidConfig("drive step and speed must be positive".into()));
        }
        self.world.route.validate()?;
        self.maintenance.obstacle_grid.validate()?;
        let m = &self.maintenance;
        for (name, v) in [
            ("purge_threshold", m.purge_threshold),
            ("retrieval_radius", m.retrieval_radius),
            ("layer.cluster_sigma", m.layer.cluster_sigma),
            ("icp.match_gate", m.icp.match_gate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Whether maintenance runs after the drive of `week`.
    pub fn maintains_after(&self, week: u32) -> bool {
        (week + 1).is_multiple_of(self.cadence)
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |i| offset - i - 1) + 1;
    (line, column)
}

//! Visibility vectors of prior-map features and transient-feature removal.
//!
//! Every feature carries two vectors indexed by the discretised angle from the
//! feature towards the vehicle: the largest range at which it was detected
//! from that direction, and the log-odds of detecting it from there. A match
//! can only grow a bin; a misdetection that was not caused by an occlusion can
//! only shrink it. The visibility volume
//!
//! ```text
//! V = Σ_α 0.5 · range(α)² · P(α),   P(α) = 1 - 1 / (1 + e^l(α))
//! ```
//!
//! summarises the area from which the feature is observable. A feature whose
//! volume drops by more than a threshold fraction between two maintenance
//! cycles no longer exists and is purged.

use serde::{Deserialize, Serialize};

use crate::geometry::{to_vehicle, AngularBins, Pose2};
use crate::map::{Feature, FeatureId, PriorMap};
use crate::sensor_model::{probability, SensorModelGrid};

/// Fraction of visibility volume a feature may lose before it is purged.
pub const DEFAULT_PURGE_THRESHOLD: f64 = 0.12;

/// Weight used when the sensor-model cell under the feature is still at its
/// uninformative prior, so visibility can evolve from a cold start.
pub const LOGODDS_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRecord {
    pub ranges: Vec<f64>,
    pub logodds: Vec<f64>,
    pub volume_at_last_maintenance: f64,
}

impl VisibilityRecord {
    pub fn new(bins: AngularBins) -> Self {
        Self {
            ranges: vec![0.0; bins.count()],
            logodds: vec![0.0; bins.count()],
            volume_at_last_maintenance: 0.0,
        }
    }

    pub fn bin_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn volume(&self) -> f64 {
        self.ranges
            .iter()
            .zip(&self.logodds)
            .map(|(r, l)| 0.5 * r * r * probability(*l))
            .sum()
    }
}

/// Visibility volume of a feature.
pub fn visibility_volume(feature: &Feature) -> f64 {
    feature.visibility.volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibilityUpdate {
    /// Matched from further away than ever before in this direction.
    Extended,
    /// Missed, unoccluded, from closer than the stored range.
    Shrunk,
    Unchanged,
    /// The feature lies outside the sensor-model grid around the pose.
    OutsideGrid,
}

/// Updates one feature's visibility vectors for a single vehicle pose.
pub fn update_visibility(
    feature: &mut Feature,
    pose: &Pose2,
    matched: bool,
    occluded: bool,
    grid: &SensorModelGrid,
    bins: AngularBins,
) -> VisibilityUpdate {
    let Ok(local) = to_vehicle(pose, feature.position) else {
        return VisibilityUpdate::Unchanged;
    };
    let cell = grid.query_logodds(local, feature.kind);
    if !cell.in_extent {
        return VisibilityUpdate::OutsideGrid;
    }
    let Ok(polar) = bins.to_polar(feature.position - pose.position()) else {
        return VisibilityUpdate::Unchanged;
    };
    let weight = cell.logodds.abs().max(LOGODDS_FLOOR);
    let record = &mut feature.visibility;
    let stored = &mut record.ranges[polar.bin];

    if matched {
        if *stored < polar.range {
            *stored = polar.range;
            record.logodds[polar.bin] += weight;
            return VisibilityUpdate::Extended;
        }
    } else if !occluded && *stored > polar.range {
        *stored = (polar.range - 1.0).max(0.0);
        record.logodds[polar.bin] -= weight;
        return VisibilityUpdate::Shrunk;
    }
    VisibilityUpdate::Unchanged
}

/// Relative loss of visibility volume between two maintenance cycles, or
/// `None` when there was no volume to lose.
pub fn volume_reduction(before: f64, after: f64) -> Option<f64> {
    (before > 0.0).then(|| (before - after) / before)
}

/// Removes features whose visibility volume shrank by more than `threshold`
/// since the previous maintenance cycle, and records the current volume on
/// every survivor. Returns the removed ids in map order.
pub fn purge_transient(map: &mut PriorMap, threshold: f64) -> Vec<FeatureId> {
    let mut removed = Vec::new();
    map.features.retain_mut(|feature| {
        let after = feature.visibility.volume();
        let before = feature.visibility.volume_at_last_maintenance;
        match volume_reduction(before, after) {
            Some(reduction) if reduction > threshold => {
                removed.push(feature.id);
                false
            }
            _ => {
                feature.visibility.volume_at_last_maintenance = after;
                true
            }
        }
    });
    removed
}

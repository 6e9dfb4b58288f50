//! Landmark features, sensor observations and the prior map.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AngularBins, Point2, Pose2};
use crate::visibility::VisibilityRecord;

/// Maximum diameter of a valid pole, in meters.
pub const MAX_POLE_DIAMETER: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Pole,
    Corner,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Pole, FeatureKind::Corner];

    pub fn index(self) -> usize {
        match self {
            FeatureKind::Pole => 0,
            FeatureKind::Corner => 1,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Pole => "pole",
            FeatureKind::Corner => "corner",
        })
    }
}

/// Semantic classes transferred from the camera segmentation onto lidar points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticLabel {
    Pole,
    Building,
    Road,
    Vegetation,
    UndrivableRoad,
    Pedestrian,
    Rider,
    Sky,
    Fence,
    Vehicle,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureId(pub u64);

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// A mapped pole or corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: FeatureId,
    pub position: Point2,
    pub kind: FeatureKind,
    pub height: f64,
    /// Diameter in meters for poles, opening angle in radians for corners.
    pub geom_param: f64,
    pub label_histogram: BTreeMap<SemanticLabel, u32>,
    pub visibility: VisibilityRecord,
}

impl Feature {
    pub fn new(
        id: FeatureId,
        position: Point2,
        kind: FeatureKind,
        height: f64,
        geom_param: f64,
        bins: AngularBins,
    ) -> Result<Self> {
        let feature = Self {
            id,
            position,
            kind,
            height,
            geom_param,
            label_histogram: BTreeMap::new(),
            visibility: VisibilityRecord::new(bins),
        };
        feature.validate()?;
        Ok(feature)
    }

    pub fn with_label(mut self, label: SemanticLabel) -> Self {
        *self.label_histogram.entry(label).or_insert(0) += 1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::InvalidFeature(format!("{}: non-finite position", self.id)));
        }
        if !(self.height > 0.0) {
            return Err(Error::InvalidFeature(format!(
                "{}: height {} must be positive",
                self.id, self.height
            )));
        }
        if self.kind == FeatureKind::Pole && !(self.geom_param < MAX_POLE_DIAMETER) {
            return Err(Error::InvalidFeature(format!(
                "{}: pole diameter {} is not below {MAX_POLE_DIAMETER} m",
                self.id, self.geom_param
            )));
        }
        Ok(())
    }

    /// Most frequent semantic label, if any were recorded.
    pub fn predominant_label(&self) -> Option<SemanticLabel> {
        self.label_histogram
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(label, _)| *label)
    }
}

/// A feature detection in the vehicle frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub position: Point2,
    pub kind: FeatureKind,
    pub height: f64,
    pub geom_param: f64,
    pub label: SemanticLabel,
}

/// The localization map: features plus their visibility records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMap {
    pub features: Vec<Feature>,
    pub version: u32,
    pub bins: AngularBins,
    next_id: u64,
}

impl Default for PriorMap {
    fn default() -> Self {
        Self::new(AngularBins::default())
    }
}

impl PriorMap {
    pub fn new(bins: AngularBins) -> Self {
        Self {
            features: Vec::new(),
            version: 1,
            bins,
            next_id: 0,
        }
    }

    /// Rebuilds a stored map, checking every invariant.
    pub fn from_parts(bins: AngularBins, version: u32, next_id: u64, features: Vec<Feature>) -> Result<Self> {
        let map = Self {
            features,
            version,
            bins,
            next_id,
        };
        map.validate()?;
        Ok(map)
    }

    /// The identifier the next [`allocate_id`](Self::allocate_id) returns.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Identifier for a feature not yet in the map.
    pub fn allocate_id(&mut self) -> FeatureId {
        let id = FeatureId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Adds a feature, keeping identifiers unique.
    pub fn insert(&mut self, feature: Feature) -> Result<()> {
        feature.validate()?;
        if feature.visibility.bin_count() != self.bins.count() {
            return Err(Error::InvalidFeature(format!(
                "{}: visibility record has {} bins, map uses {}",
                feature.id,
                feature.visibility.bin_count(),
                self.bins.count()
            )));
        }
        if self.get(feature.id).is_some() {
            return Err(Error::InvalidFeature(format!("duplicate id {}", feature.id)));
        }
        self.next_id = self.next_id.max(feature.id.0 + 1);
        self.features.push(feature);
        Ok(())
    }

    pub fn get(&self, id: FeatureId) -> Option<&Feature> {
        self.features.iter().find(|f| f.id == id)
    }

    pub fn get_mut(&mut self, id: FeatureId) -> Option<&mut Feature> {
        self.features.iter_mut().find(|f| f.id == id)
    }

    pub fn remove(&mut self, ids: &[FeatureId]) {
        self.features.retain(|f| !ids.contains(&f.id));
    }

    /// Checks the invariants a loaded map must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.version < 1 {
            return Err(Error::InvalidFeature("map version must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            f.validate()?;
            if !seen.insert(f.id) {
                return Err(Error::InvalidFeature(format!("duplicate id {}", f.id)));
            }
            if f.id.0 >= self.next_id {
                return Err(Error::InvalidFeature(format!(
                    "{} is not below the id counter {}",
                    f.id, self.next_id
                )));
            }
            if f.visibility.bin_count() != self.bins.count() {
                return Err(Error::InvalidFeature(format!(
                    "{}: visibility record has {} bins",
                    f.id,
                    f.visibility.bin_count()
                )));
            }
        }
        Ok(())
    }

    /// Features within `radius` meters of the pose, in map order.
    pub fn within(&self, pose: &Pose2, radius: f64) -> impl Iterator<Item = &Feature> {
        let centre = pose.position();
        self.features
            .iter()
            .filter(move |f| f.position.distance(centre) <= radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pole(id: u64, x: f64) -> Feature {
        Feature::new(
            FeatureId(id),
            Point2::new(x, 0.0),
            FeatureKind::Pole,
            2.0,
            0.1,
            AngularBins::default(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_invalid_features() {
        let bins = AngularBins::default();
        let p = Point2::new(0.0, 0.0);
        assert!(Feature::new(FeatureId(0), p, FeatureKind::Pole, 0.0, 0.1, bins).is_err());
        assert!(Feature::new(FeatureId(0), p, FeatureKind::Pole, 2.0, 0.3, bins).is_err());
        assert!(Feature::new(FeatureId(0), p, FeatureKind::Corner, 2.0, 1.57, bins).is_ok());
    }

    #[test]
    fn ids_stay_unique() {
        let mut map = PriorMap::default();
        map.insert(pole(4, 0.0)).unwrap();
        assert!(map.insert(pole(4, 1.0)).is_err());
        assert_eq!(map.allocate_id(), FeatureId(5));
        map.validate().unwrap();
    }

    #[test]
    fn predominant_label_picks_the_mode() {
        let f = pole(0, 0.0)
            .with_label(SemanticLabel::Vegetation)
            .with_label(SemanticLabel::Pole)
            .with_label(SemanticLabel::Pole);
        assert_eq!(f.predominant_label(), Some(SemanticLabel::Pole));
    }
}

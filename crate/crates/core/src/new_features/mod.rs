//! Staging layer for observations that did not match the prior map.
//!
//! Unmatched observations are projected into the global frame and associated
//! with existing candidates by ICP; the rest start new candidates. At each
//! maintenance cycle the layer is reconciled by Euclidean clustering,
//! candidate positions are adjusted by least squares, and candidates that
//! were seen over enough distance in a sparse part of the map are promoted.

pub mod cluster;
pub mod optimize;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{to_global, Point2, Pose2};
use crate::map::{Feature, FeatureId, FeatureKind, Observation, PriorMap, SemanticLabel};
use crate::matcher::{icp_align, IcpConfig};

use self::cluster::{euclidean_clusters, spread, DisjointSet};
use self::optimize::{solve_landmark, GraphConfig, RangeBearingEdge};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerConfig {
    pub match_gate: f64,
    pub cluster_link: f64,
    /// A cluster merges its candidates only if its spread is below this.
    pub cluster_sigma: f64,
    /// Candidates must be seen over strictly more than this distance, meters.
    pub min_distance: f64,
    pub ratio_cutoff: f64,
    pub neighbor_radius: f64,
    pub duplicate_radius: f64,
    /// Cycles after which a candidate with a single observation expires.
    pub expiry_cycles: u32,
    pub graph: GraphConfig,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            match_gate: 1.0,
            cluster_link: 0.5,
            cluster_sigma: 0.15,
            min_distance: 1.0,
            ratio_cutoff: 0.4,
            neighbor_radius: 40.0,
            duplicate_radius: 0.5,
            expiry_cycles: 6,
            graph: GraphConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateObservation {
    pub position: Point2,
    pub source_pose: Pose2,
    pub timestamp: f64,
    /// Drive the observation came from; path length is only accumulated
    /// between observations of the same drive.
    pub drive: u32,
    pub height: f64,
    pub geom_param: f64,
    pub label: SemanticLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeature {
    pub id: u64,
    pub kind: FeatureKind,
    pub observations: Vec<CandidateObservation>,
    pub distance_travelled: f64,
    pub optimized_position: Option<Point2>,
    /// Maintenance cycle in which the candidate was created.
    pub created_cycle: u32,
}

impl CandidateFeature {
    pub fn mean_position(&self) -> Point2 {
        let n = self.observations.len().max(1) as f64;
        self.observations
            .iter()
            .fold(Point2::ORIGIN, |a, o| a + o.position)
            * (1.0 / n)
    }

    /// Optimised position when available, otherwise the observation mean.
    pub fn position(&self) -> Point2 {
        self.optimized_position.unwrap_or_else(|| self.mean_position())
    }

    pub fn poses_seen(&self) -> impl Iterator<Item = &Pose2> {
        self.observations.iter().map(|o| &o.source_pose)
    }

    fn push(&mut self, obs: CandidateObservation) {
        if let Some(last) = self.observations.last() {
            if last.drive == obs.drive {
                self.distance_travelled +=
                    last.source_pose.position().distance(obs.source_pose.position());
            }
        }
        self.observations.push(obs);
    }
}

/// Path length over the poses of time-ordered observations, restarting at
/// every change of drive.
pub fn path_length(observations: &[CandidateObservation]) -> f64 {
    observations
        .windows(2)
        .filter(|w| w[0].drive == w[1].drive)
        .map(|w| w[0].source_pose.position().distance(w[1].source_pose.position()))
        .sum()
}

/// Ratio of the distance to the furthest neighbour over the sum of distances
/// to all map features within `radius`. Values near one mean the
/// surroundings are sparse; with no neighbours at all the ratio is one.
pub fn concentration_ratio(position: Point2, map: &PriorMap, radius: f64) -> f64 {
    let (max, sum) = map
        .features
        .iter()
        .map(|f| f.position.distance(position))
        .filter(|d| *d <= radius)
        .fold((0.0f64, 0.0f64), |(m, s), d| (m.max(d), s + d));
    if sum > 0.0 {
        max / sum
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeOutcome {
    /// `(candidate id, new feature id)`.
    pub merged: Vec<(u64, FeatureId)>,
    pub discarded: Vec<u64>,
    pub duplicates: Vec<u64>,
    pub pending: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewFeatureLayer {
    pub candidates: Vec<CandidateFeature>,
    /// Number of maintenance cycles completed.
    pub cycle: u32,
    pub config: LayerConfig,
    next_id: u64,
}

impl Default for NewFeatureLayer {
    fn default() -> Self {
        Self::new(LayerConfig::default())
    }
}

impl NewFeatureLayer {
    pub fn new(config: LayerConfig) -> Self {
        Self {
            candidates: Vec::new(),
            cycle: 0,
            config,
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&CandidateFeature> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// Adds unmatched vehicle-frame observations seen from `pose`.
    pub fn ingest_unmatched(
        &mut self,
        observations: &[Observation],
        pose: &Pose2,
        timestamp: f64,
        drive: u32,
    ) {
        if observations.is_empty() {
            return;
        }
        let sources: Vec<(Point2, FeatureKind)> = observations
            .iter()
            .filter_map(|o| to_global(pose, o.position).ok().map(|g| (g, o.kind)))
            .collect();
        if sources.len() != observations.len() {
            return;
        }
        let targets: Vec<(Point2, FeatureKind)> =
            self.candidates.iter().map(|c| (c.position(), c.kind)).collect();
        let icp = IcpConfig {
            match_gate: self.config.match_gate,
            ..IcpConfig::default()
        };
        let alignment = icp_align(&sources, &targets, &icp);

        let mut assigned = vec![None; observations.len()];
        for &(i, j) in &alignment.pairs {
            assigned[i] = Some(j);
        }
        for (i, o) in observations.iter().enumerate() {
            let obs = CandidateObservation {
                position: sources[i].0,
                source_pose: *pose,
                timestamp,
                drive,
                height: o.height,
                geom_param: o.geom_param,
                label: o.label,
            };
            match assigned[i] {
                Some(j) => self.candidates[j].push(obs),
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.candidates.push(CandidateFeature {
                        id,
                        kind: o.kind,
                        observations: vec![obs],
                        distance_travelled: 0.0,
                        optimized_position: None,
                        created_cycle: self.cycle,
                    });
                }
            }
        }
    }

    /// Links candidates whose observations form a tight Euclidean cluster.
    /// Returns the number of candidates absorbed into others.
    pub fn cluster_weekly(&mut self) -> usize {
        let mut sets = DisjointSet::new(self.candidates.len());
        for kind in FeatureKind::ALL {
            let mut owners = Vec::new();
            let mut points = Vec::new();
            for (ci, c) in self.candidates.iter().enumerate() {
                if c.kind != kind {
                    continue;
                }
                for o in &c.observations {
                    owners.push(ci);
                    points.push(o.position);
                }
            }
            for members in euclidean_clusters(&points, self.config.cluster_link) {
                let first = owners[members[0]];
                if members.iter().all(|&m| owners[m] == first) {
                    continue;
                }
                let pts: Vec<Point2> = members.iter().map(|&m| points[m]).collect();
                if spread(&pts) < self.config.cluster_sigma {
                    for &m in &members {
                        sets.union(first, owners[m]);
                    }
                }
            }
        }

        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.candidates.len() {
            groups.entry(sets.find(i)).or_default().push(i);
        }
        let absorbed = self.candidates.len() - groups.len();
        if absorbed == 0 {
            return 0;
        }
        let old = std::mem::take(&mut self.candidates);
        let mut slots: Vec<Option<CandidateFeature>> = old.into_iter().map(Some).collect();
        for members in groups.values() {
            let mut merged = slots[members[0]].take().expect("each candidate used once");
            for &m in &members[1..] {
                let other = slots[m].take().expect("each candidate used once");
                merged.id = merged.id.min(other.id);
                merged.created_cycle = merged.created_cycle.min(other.created_cycle);
                merged.observations.extend(other.observations);
            }
            if members.len() > 1 {
                merged
                    .observations
                    .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
                merged.distance_travelled = path_length(&merged.observations);
                merged.optimized_position = None;
            }
            self.candidates.push(merged);
        }
        self.candidates.sort_by_key(|c| c.id);
        absorbed
    }

    fn eligible(&self, c: &CandidateFeature) -> bool {
        c.distance_travelled > self.config.min_distance
    }

    /// Least-squares positions for every candidate seen over enough distance.
    pub fn optimize_positions(&mut self) {
        let graph = self.config.graph;
        let min_distance = self.config.min_distance;
        for c in &mut self.candidates {
            if c.distance_travelled <= min_distance {
                continue;
            }
            let mean = c.mean_position();
            if c.observations.len() < 2 {
                c.optimized_position = Some(mean);
                continue;
            }
            let edges: Vec<RangeBearingEdge> = c
                .observations
                .iter()
                .map(|o| RangeBearingEdge::from_observation(o.source_pose, o.position))
                .collect();
            c.optimized_position = Some(solve_landmark(&edges, mean, &graph).position);
        }
    }

    /// Promotes eligible candidates in sparse areas into `map`. Ratios are
    /// evaluated against the map as it stood before this call.
    pub fn select_and_merge(&mut self, map: &mut PriorMap) -> MergeOutcome {
        let cfg = self.config;
        let reference = map.clone();
        let mut outcome = MergeOutcome::default();
        let mut keep = Vec::with_capacity(self.candidates.len());
        for c in std::mem::take(&mut self.candidates) {
            if !self.eligible(&c) {
                outcome.pending.push(c.id);
                keep.push(c);
                continue;
            }
            let position = c.position();
            if concentration_ratio(position, &reference, cfg.neighbor_radius) < cfg.ratio_cutoff {
                outcome.discarded.push(c.id);
                continue;
            }
            if map
                .features
                .iter()
                .any(|f| f.position.distance(position) <= cfg.duplicate_radius)
            {
                outcome.duplicates.push(c.id);
                continue;
            }
            match promote(&c, position, map) {
                Some(id) => outcome.merged.push((c.id, id)),
                None => outcome.discarded.push(c.id),
            }
        }
        self.candidates = keep;
        outcome
    }

    /// Drops stale single-observation candidates; returns how many.
    pub fn expire(&mut self) -> usize {
        let (cycle, limit) = (self.cycle, self.config.expiry_cycles);
        let before = self.candidates.len();
        self.candidates
            .retain(|c| c.observations.len() >= 2 || cycle.saturating_sub(c.created_cycle) < limit);
        before - self.candidates.len()
    }

    /// Marks the end of a maintenance cycle.
    pub fn finish_cycle(&mut self) {
        self.cycle += 1;
    }
}

fn promote(c: &CandidateFeature, position: Point2, map: &mut PriorMap) -> Option<FeatureId> {
    let n = c.observations.len() as f64;
    let height = c.observations.iter().map(|o| o.height).sum::<f64>() / n;
    let geom_param = c.observations.iter().map(|o| o.geom_param).sum::<f64>() / n;
    let id = map.allocate_id();
    let mut feature = Feature::new(id, position, c.kind, height, geom_param, map.bins).ok()?;
    for o in &c.observations {
        feature = feature.with_label(o.label);
    }
    map.insert(feature).ok()?;
    Some(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AngularBins;
    use approx::assert_abs_diff_eq;

    fn obs(x: f64, y: f64) -> Observation {
        Observation {
            position: Point2::new(x, y),
            kind: FeatureKind::Pole,
            height: 2.0,
            geom_param: 0.1,
            label: SemanticLabel::Pole,
        }
    }

    fn map_with(points: &[(f64, f64)]) -> PriorMap {
        let mut map = PriorMap::default();
        for &(x, y) in points {
            let id = map.allocate_id();
            map.insert(
                Feature::new(id, Point2::new(x, y), FeatureKind::Pole, 2.0, 0.1, AngularBins::default())
                    .unwrap(),
            )
            .unwrap();
        }
        map
    }

    #[test]
    fn ingest_creates_then_appends() {
        let mut layer = NewFeatureLayer::default();
        let pose = Pose2::new(0.0, 0.0, 0.0);
        layer.ingest_unmatched(&[obs(5.0, 2.0), obs(8.0, -3.0)], &pose, 0.0, 0);
        assert_eq!(layer.len(), 2);

        let next = Pose2::new(1.0, 0.0, 0.0);
        // Same first feature, re-observed 0.2 m off.
        layer.ingest_unmatched(&[obs(4.2, 2.0)], &next, 0.1, 0);
        assert_eq!(layer.len(), 2);
        let c = layer.get(0).unwrap();
        assert_eq!(c.observations.len(), 2);
        assert_abs_diff_eq!(c.distance_travelled, 1.0, epsilon = 1e-12);
        assert_eq!(c.poses_seen().count(), 2);
    }

    #[test]
    fn distance_does_not_bridge_drives() {
        let mut layer = NewFeatureLayer::default();
        layer.ingest_unmatched(&[obs(5.0, 0.0)], &Pose2::new(0.0, 0.0, 0.0), 0.0, 0);
        layer.ingest_unmatched(&[obs(-45.0, 0.0)], &Pose2::new(50.0, 0.0, 0.0), 1.0, 1);
        assert_eq!(layer.len(), 1);
        assert_eq!(layer.candidates[0].distance_travelled, 0.0);
    }

    #[test]
    fn tight_clusters_merge_candidates() {
        let mut layer = NewFeatureLayer::default();
        let pose = Pose2::default();
        layer.ingest_unmatched(&[obs(5.0, 0.0)], &pose, 0.0, 0);
        // Force a second candidate 5 cm away, as if ICP association failed.
        layer.candidates.push(CandidateFeature {
            id: 7,
            ..layer.candidates[0].clone()
        });
        layer.candidates[1].observations[0].position = Point2::new(5.05, 0.0);
        assert_eq!(layer.cluster_weekly(), 1);
        assert_eq!(layer.len(), 1);
        assert_eq!(layer.candidates[0].observations.len(), 2);
    }

    #[test]
    fn loose_clusters_stay_apart() {
        let mut layer = NewFeatureLayer::default();
        let pose = Pose2::default();
        layer.ingest_unmatched(&[obs(5.0, 0.0)], &pose, 0.0, 0);
        let mut other = layer.candidates[0].clone();
        other.id = 9;
        // Points at ±0.2 m give a spread of 0.2 m.
        layer.candidates[0].observations[0].position = Point2::new(4.8, 0.0);
        other.observations[0].position = Point2::new(5.2, 0.0);
        layer.candidates.push(other);
        assert_eq!(layer.cluster_weekly(), 0);
        assert_eq!(layer.len(), 2);

        let mut single = NewFeatureLayer::default();
        single.ingest_unmatched(&[obs(5.0, 0.0)], &pose, 0.0, 0);
        assert_eq!(single.cluster_weekly(), 0);
    }

    #[test]
    fn concentration_examples() {
        let p = Point2::ORIGIN;
        assert_eq!(concentration_ratio(p, &map_with(&[(17.0, 0.0)]), 40.0), 1.0);
        let equal = map_with(&[(5.0, 0.0), (0.0, 5.0), (-5.0, 0.0)]);
        assert_abs_diff_eq!(concentration_ratio(p, &equal, 40.0), 1.0 / 3.0, epsilon = 1e-15);
        let mixed = map_with(&[(2.0, 0.0), (0.0, 3.0), (-5.0, 0.0)]);
        assert_abs_diff_eq!(concentration_ratio(p, &mixed, 40.0), 0.5, epsilon = 1e-15);
        assert_eq!(concentration_ratio(p, &PriorMap::default(), 40.0), 1.0);
        // Neighbours beyond the radius are ignored.
        assert_eq!(concentration_ratio(p, &map_with(&[(3.0, 0.0), (50.0, 0.0)]), 40.0), 1.0);
    }

    fn candidate(id: u64, at: Point2, distance: f64) -> CandidateFeature {
        CandidateFeature {
            id,
            kind: FeatureKind::Pole,
            observations: vec![CandidateObservation {
                position: at,
                source_pose: Pose2::default(),
                timestamp: 0.0,
                drive: 0,
                height: 1.5,
                geom_param: 0.12,
                label: SemanticLabel::Pole,
            }],
            distance_travelled: distance,
            optimized_position: Some(at),
            created_cycle: 0,
        }
    }

    #[test]
    fn selection_rules() {
        // Dense: six neighbours at equal distance give a ratio of 1/6.
        let mut map = map_with(&[
            (10.0, 0.0),
            (-10.0, 0.0),
            (0.0, 10.0),
            (0.0, -10.0),
            (7.07, 7.07),
            (-7.07, -7.07),
            (200.0, 0.0),
        ]);
        let mut layer = NewFeatureLayer {
            candidates: vec![
                candidate(0, Point2::ORIGIN, 3.0),
                candidate(1, Point2::new(215.0, 0.0), 3.0),
                candidate(2, Point2::new(100.0, 0.0), 0.5),
                candidate(3, Point2::new(200.3, 0.0), 3.0),
            ],
            ..Default::default()
        };
        let out = layer.select_and_merge(&mut map);
        assert_eq!(out.discarded, vec![0]);
        assert_eq!(out.merged.len(), 1);
        assert_eq!(out.merged[0].0, 1);
        assert_eq!(out.pending, vec![2]);
        assert_eq!(out.duplicates, vec![3]);
        assert_eq!(map.len(), 8);
        assert_eq!(layer.len(), 1);
        let added = map.get(out.merged[0].1).unwrap();
        assert_eq!(added.visibility.volume(), 0.0);
        assert_eq!(added.predominant_label(), Some(SemanticLabel::Pole));
    }

    #[test]
    fn batch_ratios_ignore_same_cycle_merges() {
        let mut map = PriorMap::default();
        let mut layer = NewFeatureLayer {
            candidates: (0..4)
                .map(|i| candidate(i, Point2::new(i as f64 * 3.0, 0.0), 5.0))
                .collect(),
            ..Default::default()
        };
        let out = layer.select_and_merge(&mut map);
        assert_eq!(out.merged.len(), 4);
    }

    #[test]
    fn expiry_after_six_cycles() {
        let mut layer = NewFeatureLayer {
            candidates: vec![candidate(0, Point2::ORIGIN, 0.0)],
            ..Default::default()
        };
        for _ in 0..5 {
            layer.finish_cycle();
            assert_eq!(layer.expire(), 0);
        }
        layer.finish_cycle();
        assert_eq!(layer.expire(), 1);
    }

    #[test]
    fn optimization_uses_the_mean_for_single_observations() {
        let mut layer = NewFeatureLayer::default();
        let mut c = candidate(0, Point2::new(3.0, 4.0), 2.0);
        c.optimized_position = None;
        layer.candidates = vec![c];
        layer.optimize_positions();
        assert_eq!(layer.candidates[0].optimized_position, Some(Point2::new(3.0, 4.0)));
    }
}

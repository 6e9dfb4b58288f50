//! Data association between current observations and nearby map features.
//!
//! Observations are projected into the global frame with the current pose
//! estimate and aligned to the retrieved map features with a point-to-point
//! ICP. Pairing is kind-aware, one-to-one and greedy in order of increasing
//! distance, restricted to a gate. The final pairing yields the three outputs
//! the maintenance pipeline consumes: matched pairs, unmatched map features
//! and unmatched observations.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, to_global, Point2, Pose2};
use crate::map::{Feature, FeatureId, FeatureKind, Observation, PriorMap};

/// Radius around the pose estimate used to retrieve map features.
pub const DEFAULT_RETRIEVAL_RADIUS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iterations: usize,
    pub match_gate: f64,
    /// Convergence tolerance on the change of the transform per iteration,
    /// applied to both the translation (m) and the rotation (rad).
    pub epsilon: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            match_gate: 1.0,
            epsilon: 1e-4,
        }
    }
}

/// Rigid planar transform: rotate by `dtheta` about the origin, then
/// translate by `(dx, dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform2 {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl RigidTransform2 {
    pub const IDENTITY: RigidTransform2 = RigidTransform2 {
        dx: 0.0,
        dy: 0.0,
        dtheta: 0.0,
    };

    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotated(self.dtheta) + Point2::new(self.dx, self.dy)
    }

    pub fn apply_pose(&self, pose: &Pose2) -> Pose2 {
        let p = self.apply(pose.position());
        Pose2::new(p.x, p.y, pose.heading + self.dtheta)
    }
}

/// Closed-form least-squares rigid transform taking each `source` point onto
/// its `target`.
pub fn fit_rigid(pairs: &[(Point2, Point2)]) -> RigidTransform2 {
    if pairs.is_empty() {
        return RigidTransform2::IDENTITY;
    }
    let n = pairs.len() as f64;
    let (sp, tp) = pairs.iter().fold((Point2::ORIGIN, Point2::ORIGIN), |(a, b), (s, t)| {
        (a + *s, b + *t)
    });
    let (sc, tc) = (sp * (1.0 / n), tp * (1.0 / n));
    let (mut cross, mut dot) = (0.0, 0.0);
    for (s, t) in pairs {
        let (a, b) = (*s - sc, *t - tc);
        cross += a.x * b.y - a.y * b.x;
        dot += a.x * b.x + a.y * b.y;
    }
    let dtheta = cross.atan2(dot);
    let t = tc - sc.rotated(dtheta);
    RigidTransform2 {
        dx: t.x,
        dy: t.y,
        dtheta,
    }
}

/// Result of aligning two kind-tagged point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub transform: RigidTransform2,
    /// `(source index, target index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub converged: bool,
    pub iterations: usize,
    /// Gate-truncated RMS residual over all source points: paired points
    /// contribute their distance, unpaired ones the gate.
    pub mean_residual: f64,
    /// `mean_residual` after pairing at the start and after every iteration.
    pub residual_trace: Vec<f64>,
}

type Tagged = (Point2, FeatureKind);

fn greedy_pairs(
    sources: &[Tagged],
    targets: &[Tagged],
    transform: &RigidTransform2,
    gate: f64,
) -> Vec<(usize, usize)> {
    let moved: Vec<Point2> = sources.iter().map(|(p, _)| transform.apply(*p)).collect();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (p, kind)) in moved.iter().zip(sources.iter().map(|s| s.1)).enumerate() {
        for (j, (q, target_kind)) in targets.iter().enumerate() {
            if kind != *target_kind {
                continue;
            }
            let d = p.distance(*q);
            if d <= gate {
                candidates.push((d, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_source = vec![false; sources.len()];
    let mut used_target = vec![false; targets.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_source[i] && !used_target[j] {
            used_source[i] = true;
            used_target[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn truncated_cost(
    sources: &[Tagged],
    targets: &[Tagged],
    transform: &RigidTransform2,
    pairs: &[(usize, usize)],
    gate: f64,
) -> f64 {
    let gate2 = gate * gate;
    let paired: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            let d = transform.apply(sources[i].0).distance(targets[j].0);
            (d * d).min(gate2)
        })
        .sum();
    paired + (sources.len() - pairs.len()) as f64 * gate2
}

/// Aligns `sources` (observations in the global frame) to `targets` (map
/// points). A re-pairing is only accepted if it does not raise the truncated
/// cost, which keeps the residual trace non-increasing.
pub fn icp_align(sources: &[Tagged], targets: &[Tagged], config: &IcpConfig) -> Alignment {
    let gate = config.match_gate;
    let rms = |cost: f64| (cost / sources.len().max(1) as f64).sqrt();
    let unconverged = |trace: Vec<f64>| Alignment {
        transform: RigidTransform2::IDENTITY,
        pairs: Vec::new(),
        converged: false,
        iterations: 0,
        mean_residual: if sources.is_empty() { 0.0 } else { gate },
        residual_trace: trace,
    };
    if sources.is_empty() || targets.is_empty() {
        return unconverged(Vec::new());
    }

    let mut transform = RigidTransform2::IDENTITY;
    let mut pairs = greedy_pairs(sources, targets, &transform, gate);
    if pairs.is_empty() {
        return unconverged(vec![gate]);
    }
    let mut cost = truncated_cost(sources, targets, &transform, &pairs, gate);
    let mut trace = vec![rms(cost)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let matched: Vec<(Point2, Point2)> = pairs
            .iter()
            .map(|&(i, j)| (sources[i].0, targets[j].0))
            .collect();
        let next = fit_rigid(&matched);

        let repaired = greedy_pairs(sources, targets, &next, gate);
        let repaired_cost = truncated_cost(sources, targets, &next, &repaired, gate);
        let kept_cost = truncated_cost(sources, targets, &next, &pairs, gate);
        if repaired_cost <= kept_cost {
            pairs = repaired;
            cost = repaired_cost;
        } else {
            pairs.retain(|&(i, j)| next.apply(sources[i].0).distance(targets[j].0) <= gate);
            cost = kept_cost;
        }

        let moved = Point2::new(next.dx - transform.dx, next.dy - transform.dy).norm();
        let turned = normalize_angle(next.dtheta - transform.dtheta).abs();
        transform = next;
        trace.push(rms(cost));
        if pairs.is_empty() {
            break;
        }
        if moved < config.epsilon && turned < config.epsilon {
            converged = true;
            break;
        }
    }

    Alignment {
        transform,
        pairs,
        converged,
        iterations,
        mean_residual: rms(cost),
        residual_trace: trace,
    }
}

/// Features within `radius` meters of the pose estimate.
pub fn retrieve_local<'a>(map: &'a PriorMap, pose: &Pose2, radius: f64) -> Vec<&'a Feature> {
    map.within(pose, radius).collect()
}

/// Matcher output in terms of map feature ids and observation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Maps the projected observations onto the map.
    pub transform: RigidTransform2,
    pub matched: Vec<(FeatureId, usize)>,
    pub unmatched_map: Vec<FeatureId>,
    pub unmatched_obs: Vec<usize>,
    pub converged: bool,
    pub mean_residual: f64,
    pub residual_trace: Vec<f64>,
}

impl MatchResult {
    pub fn is_matched(&self, id: FeatureId) -> bool {
        self.matched.iter().any(|(f, _)| *f == id)
    }
}

/// Associates vehicle-frame observations with retrieved map features.
pub fn match_observations(
    local: &[&Feature],
    observations: &[Observation],
    pose: &Pose2,
    config: &IcpConfig,
) -> MatchResult {
    let sources: Vec<Tagged> = observations
        .iter()
        .map(|o| {
            let g = to_global(pose, o.position).unwrap_or(Point2::new(f64::NAN, f64::NAN));
            (g, o.kind)
        })
        .collect();
    let targets: Vec<Tagged> = local.iter().map(|f| (f.position, f.kind)).collect();
    let alignment = icp_align(&sources, &targets, config);

    let mut obs_matched = vec![false; observations.len()];
    let mut map_matched = vec![false; local.len()];
    let mut matched = Vec::with_capacity(alignment.pairs.len());
    for &(i, j) in &alignment.pairs {
        obs_matched[i] = true;
        map_matched[j] = true;
        matched.push((local[j].id, i));
    }
    MatchResult {
        transform: alignment.transform,
        matched,
        unmatched_map: local
            .iter()
            .zip(&map_matched)
            .filter(|(_, m)| !**m)
            .map(|(f, _)| f.id)
            .collect(),
        unmatched_obs: (0..observations.len()).filter(|i| !obs_matched[*i]).collect(),
        converged: alignment.converged,
        mean_residual: alignment.mean_residual,
        residual_trace: alignment.residual_trace,
    }
}

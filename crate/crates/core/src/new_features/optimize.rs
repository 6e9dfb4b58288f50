//! Least-squares adjustment of new landmark positions.
//!
//! The graph has fixed vertices for the vehicle poses an observation was made
//! from and free vertices for the landmark positions. Every stored
//! observation becomes a range-bearing edge. With the poses fixed the normal
//! equations are block diagonal, so each landmark is solved on its own with
//! Gauss-Newton and step halving.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, to_vehicle, Point2, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub range_sigma: f64,
    pub bearing_sigma_deg: f64,
    pub max_iterations: usize,
    /// Stop once the cost improves by less than this.
    pub cost_tolerance: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            range_sigma: 0.1,
            bearing_sigma_deg: 1.0,
            max_iterations: 50,
            cost_tolerance: 1e-9,
        }
    }
}

/// Range-bearing measurement of a landmark from a fixed pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBearingEdge {
    pub pose: Pose2,
    pub range: f64,
    pub bearing: f64,
}

impl RangeBearingEdge {
    /// Reconstructs the measurement that placed `global` when seen from `pose`.
    pub fn from_observation(pose: Pose2, global: Point2) -> Self {
        let local = to_vehicle(&pose, global).unwrap_or(Point2::ORIGIN);
        Self {
            pose,
            range: local.norm(),
            bearing: local.y.atan2(local.x),
        }
    }

    /// Whitened residual and its Jacobian with respect to the landmark.
    fn linearize(&self, landmark: Point2, config: &GraphConfig) -> (Vector2<f64>, Matrix2<f64>) {
        let sr = config.range_sigma;
        let sb = config.bearing_sigma_deg.to_radians();
        let d = landmark - self.pose.position();
        let q = (d.x * d.x + d.y * d.y).max(1e-12);
        let r = q.sqrt();
        let predicted_bearing = normalize_angle(d.y.atan2(d.x) - self.pose.heading);
        let residual = Vector2::new(
            (r - self.range) / sr,
            normalize_angle(predicted_bearing - self.bearing) / sb,
        );
        let jacobian = Matrix2::new(d.x / r / sr, d.y / r / sr, -d.y / q / sb, d.x / q / sb);
        (residual, jacobian)
    }
}

/// Sum of squared whitened residuals.
pub fn edge_cost(edges: &[RangeBearingEdge], landmark: Point2, config: &GraphConfig) -> f64 {
    edges
        .iter()
        .map(|e| e.linearize(landmark, config).0.norm_squared())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSolution {
    pub position: Point2,
    /// Cost at the initial guess followed by the cost after every accepted step.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
}

/// Gauss-Newton on a single landmark. A step that would raise the cost is
/// halved until it does not; if no halving helps the solver stops.
pub fn solve_landmark(
    edges: &[RangeBearingEdge],
    initial: Point2,
    config: &GraphConfig,
) -> LandmarkSolution {
    let mut position = initial;
    let mut cost = edge_cost(edges, position, config);
    let mut history = vec![cost];
    let mut iterations = 0;
    if edges.is_empty() {
        return LandmarkSolution {
            position,
            cost_history: history,
            iterations,
        };
    }

    while iterations < config.max_iterations {
        iterations += 1;
        let mut h = Matrix2::zeros();
        let mut g = Vector2::zeros();
        for e in edges {
            let (r, j) = e.linearize(position, config);
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let Some(step) = h.lu().solve(&(-g)) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let candidate = position + Point2::new(step.x, step.y) * scale;
            let c = edge_cost(edges, candidate, config);
            if c <= cost {
                accepted = Some((candidate, c));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_cost)) = accepted else {
            break;
        };
        let improvement = cost - next_cost;
        position = next;
        cost = next_cost;
        history.push(cost);
        if improvement < config.cost_tolerance {
            break;
        }
    }

    LandmarkSolution {
        position,
        cost_history: history,
        iterations,
    }
}

/// A set of landmarks observed from fixed poses.
#[derive(Debug, Clone, Default)]
pub struct LandmarkGraph {
    pub poses: Vec<Pose2>,
    pub landmarks: Vec<Point2>,
    /// `(pose index, landmark index, range, bearing)`.
    pub edges: Vec<(usize, usize, f64, f64)>,
}

impl LandmarkGraph {
    pub fn add_pose(&mut self, pose: Pose2) -> usize {
        self.poses.push(pose);
        self.poses.len() - 1
    }

    pub fn add_landmark(&mut self, initial: Point2) -> usize {
        self.landmarks.push(initial);
        self.landmarks.len() - 1
    }

    pub fn add_edge(&mut self, pose: usize, landmark: usize, range: f64, bearing: f64) {
        self.edges.push((pose, landmark, range, bearing));
    }

    fn edges_of(&self, landmark: usize) -> Vec<RangeBearingEdge> {
        self.edges
            .iter()
            .filter(|e| e.1 == landmark)
            .map(|&(p, _, range, bearing)| RangeBearingEdge {
                pose: self.poses[p],
                range,
                bearing,
            })
            .collect()
    }

    pub fn cost(&self, config: &GraphConfig) -> f64 {
        (0..self.landmarks.len())
            .map(|l| edge_cost(&self.edges_of(l), self.landmarks[l], config))
            .sum()
    }

    /// Optimises every landmark in place; returns the total cost history.
    pub fn optimize(&mut self, config: &GraphConfig) -> Vec<f64> {
        let solutions: Vec<LandmarkSolution> = (0..self.landmarks.len())
            .map(|l| solve_landmark(&self.edges_of(l), self.landmarks[l], config))
            .collect();
        let steps = solutions.iter().map(|s| s.cost_history.len()).max().unwrap_or(1);
        let total = (0..steps)
            .map(|k| {
                solutions
                    .iter()
                    .map(|s| s.cost_history[k.min(s.cost_history.len() - 1)])
                    .sum()
            })
            .collect();
        for (l, s) in solutions.into_iter().enumerate() {
            self.landmarks[l] = s.position;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_triangulation_is_exact() {
        let truth = Point2::new(12.0, 7.0);
        let poses = [
            Pose2::new(0.0, 0.0, 0.0),
            Pose2::new(5.0, 0.5, 0.1),
            Pose2::new(10.0, 0.0, -0.05),
        ];
        let edges: Vec<_> = poses
            .iter()
            .map(|p| RangeBearingEdge::from_observation(*p, truth))
            .collect();
        let sol = solve_landmark(&edges, Point2::new(11.0, 8.0), &GraphConfig::default());
        assert_abs_diff_eq!(sol.position.x, truth.x, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.position.y, truth.y, epsilon = 1e-6);
        assert!(*sol.cost_history.last().unwrap() < 1e-12);
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn graph_matches_per_landmark_solve() {
        let mut g = LandmarkGraph::default();
        let a = g.add_pose(Pose2::new(0.0, 0.0, 0.0));
        let b = g.add_pose(Pose2::new(4.0, 0.0, 0.0));
        let truth = Point2::new(2.0, 6.0);
        let l = g.add_landmark(Point2::new(2.5, 5.0));
        for p in [a, b] {
            let e = RangeBearingEdge::from_observation(g.poses[p], truth);
            g.add_edge(p, l, e.range, e.bearing);
        }
        let history = g.optimize(&GraphConfig::default());
        assert!(history.windows(2).all(|w| w[1] <= w[0]));
        assert_abs_diff_eq!(g.landmarks[l].x, truth.x, epsilon = 1e-6);
        assert_abs_diff_eq!(g.landmarks[l].y, truth.y, epsilon = 1e-6);
        assert!(g.cost(&GraphConfig::default()) < 1e-12);
    }
}

//! Single-linkage Euclidean clustering of 2D points.

use std::collections::HashMap;

use crate::geometry::Point2;

pub(crate) struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes the root, which keeps results ordered.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups points whose single-linkage distance is at most `link`. Clusters
/// come out ordered by their smallest member index, members ascending.
pub fn euclidean_clusters(points: &[Point2], link: f64) -> Vec<Vec<usize>> {
    let mut sets = DisjointSet::new(points.len());
    let key = |p: Point2| ((p.x / link).floor() as i64, (p.y / link).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(*p)).or_default().push(i);
    }
    for (i, p) in points.iter().enumerate() {
        let (cx, cy) = key(*p);
        for nx in cx - 1..=cx + 1 {
            for ny in cy - 1..=cy + 1 {
                let Some(bucket) = buckets.get(&(nx, ny)) else {
                    continue;
                };
                for &j in bucket {
                    if j > i && p.distance(points[j]) <= link {
                        sets.union(i, j);
                    }
                }
            }
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for i in 0..points.len() {
        let r = sets.find(i);
        by_root[r].push(i);
    }
    by_root.into_iter().filter(|c| !c.is_empty()).collect()
}

/// Largest per-axis population standard deviation of a set of points.
pub fn spread(points: &[Point2]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point2::ORIGIN, |a, p| a + *p) * (1.0 / n);
    let (vx, vy) = points.iter().fold((0.0, 0.0), |(vx, vy), p| {
        let d = *p - mean;
        (vx + d.x * d.x, vy + d.y * d.y)
    });
    (vx / n).sqrt().max((vy / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chains_link_transitively() {
        let pts = [
            Point2::new(0.0, 0.0),
            Point2::new(0.4, 0.0),
            Point2::new(0.8, 0.0),
            Point2::new(5.0, 5.0),
        ];
        let c = euclidean_clusters(&pts, 0.5);
        assert_eq!(c, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn brute_force_agreement() {
        // Pairwise-linkage closure computed by repeated relaxation.
        let pts: Vec<Point2> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.731;
                Point2::new((t * 3.1).sin() * 3.0, (t * 1.7).cos() * 3.0)
            })
            .collect();
        let mut label: Vec<usize> = (0..pts.len()).collect();
        loop {
            let mut changed = false;
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if pts[i].distance(pts[j]) <= 0.5 && label[j] < label[i] {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for c in euclidean_clusters(&pts, 0.5) {
            assert!(c.iter().all(|&i| label[i] == label[c[0]]));
        }
        let distinct: std::collections::BTreeSet<_> = label.iter().collect();
        assert_eq!(distinct.len(), euclidean_clusters(&pts, 0.5).len());
    }

    #[test]
    fn spread_of_a_pair() {
        // Two points 5 cm apart along x: σx = 0.025.
        let s = spread(&[Point2::new(1.0, 2.0), Point2::new(1.05, 2.0)]);
        assert_abs_diff_eq!(s, 0.025, epsilon = 1e-12);
    }
}

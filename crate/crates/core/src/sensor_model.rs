//! Vehicle-centred detectability grid.
//!
//! Each cell holds the log-odds that the feature extractor detects a feature
//! lying at that position relative to the vehicle. Cells are updated with a
//! binary Bayes filter: a fixed increment on detection and a fixed decrement
//! on misdetection. Poles and corners keep separate grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::map::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModelConfig {
    /// Side of the square grid, meters.
    pub extent: f64,
    pub cell_size: f64,
    pub hit: f64,
    pub miss: f64,
    /// Cell values are clamped to `[-clamp, clamp]`.
    pub clamp: f64,
}

impl Default for SensorModelConfig {
    fn default() -> Self {
        Self {
            extent: 60.0,
            cell_size: 0.5,
            hit: 0.7,
            miss: -0.4,
            clamp: 10.0,
        }
    }
}

/// Converts log-odds to a probability, `1 - 1 / (1 + e^l)`.
pub fn probability(logodds: f64) -> f64 {
    // Evaluated on the side that cannot overflow.
    if logodds >= 0.0 {
        1.0 / (1.0 + (-logodds).exp())
    } else {
        let e = logodds.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`probability`].
pub fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellQuery {
    pub logodds: f64,
    pub in_extent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModelGrid {
    config: SensorModelConfig,
    cells_per_side: usize,
    /// Row-major, indexed by `FeatureKind::index`.
    logodds: [Vec<f64>; 2],
    skipped: u64,
}

impl SensorModelGrid {
    pub fn new(config: SensorModelConfig) -> Result<Self> {
        let n = cells_per_side(&config)?;
        Ok(Self {
            config,
            cells_per_side: n,
            logodds: [vec![0.0; n * n], vec![0.0; n * n]],
            skipped: 0,
        })
    }

    /// Rebuilds a grid from stored cell values.
    pub fn from_cells(config: SensorModelConfig, poles: Vec<f64>, corners: Vec<f64>) -> Result<Self> {
        let n = cells_per_side(&config)?;
        if poles.len() != n * n || corners.len() != n * n {
            return Err(Error::InvalidConfig(format!(
                "sensor grid needs {} cells per kind, got {} and {}",
                n * n,
                poles.len(),
                corners.len()
            )));
        }
        Ok(Self {
            config,
            cells_per_side: n,
            logodds: [poles, corners],
            skipped: 0,
        })
    }

    pub fn config(&self) -> &SensorModelConfig {
        &self.config
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn cells(&self, kind: FeatureKind) -> &[f64] {
        &self.logodds[kind.index()]
    }

    /// Number of updates dropped because the point fell outside the grid.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    pub(crate) fn set_skipped(&mut self, skipped: u64) {
        self.skipped = skipped;
    }

    pub fn cell_index(&self, p: Point2) -> Option<usize> {
        let half = self.config.extent / 2.0;
        let col = ((p.x + half) / self.config.cell_size).floor();
        let row = ((p.y + half) / self.config.cell_size).floor();
        let n = self.cells_per_side as f64;
        if !(col >= 0.0 && col < n && row >= 0.0 && row < n) {
            return None;
        }
        Some(row as usize * self.cells_per_side + col as usize)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_index(p).is_some()
    }

    /// Applies one detection or misdetection at a vehicle-frame position.
    /// Returns `false`, and counts a skip, when the point is off the grid.
    pub fn update_cell(&mut self, p: Point2, kind: FeatureKind, detected: bool) -> bool {
        let Some(idx) = self.cell_index(p) else {
            self.skipped += 1;
            return false;
        };
        let step = if detected { self.config.hit } else { self.config.miss };
        let cell = &mut self.logodds[kind.index()][idx];
        *cell = (*cell + step).clamp(-self.config.clamp, self.config.clamp);
        true
    }

    pub fn query_logodds(&self, p: Point2, kind: FeatureKind) -> CellQuery {
        match self.cell_index(p) {
            Some(idx) => CellQuery {
                logodds: self.logodds[kind.index()][idx],
                in_extent: true,
            },
            None => CellQuery {
                logodds: 0.0,
                in_extent: false,
            },
        }
    }

    /// Overwrites one cell. Intended for tests and tooling.
    pub fn set_logodds(&mut self, p: Point2, kind: FeatureKind, value: f64) -> bool {
        match self.cell_index(p) {
            Some(idx) => {
                self.logodds[kind.index()][idx] = value;
                true
            }
            None => false,
        }
    }
}

fn cells_per_side(config: &SensorModelConfig) -> Result<usize> {
    if !(config.extent > 0.0 && config.cell_size > 0.0) {
        return Err(Error::InvalidConfig(
            "sensor grid extent and cell size must be positive".into(),
        ));
    }
    let n = config.extent / config.cell_size;
    if (n - n.round()).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "sensor grid extent {} is not a multiple of the cell size {}",
            config.extent, config.cell_size
        )));
    }
    if !(config.clamp > 0.0) {
        return Err(Error::InvalidConfig("log-odds clamp must be positive".into()));
    }
    Ok(n.round() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid() -> SensorModelGrid {
        SensorModelGrid::new(SensorModelConfig::default()).unwrap()
    }

    #[test]
    fn default_grid_is_120_square() {
        assert_eq!(grid().cells_per_side(), 120);
    }

    #[test]
    fn detection_and_misdetection_increments() {
        let p = Point2::new(3.2, -7.9);
        let mut g = grid();
        assert_eq!(g.query_logodds(p, FeatureKind::Pole).logodds, 0.0);
        g.update_cell(p, FeatureKind::Pole, true);
        assert_abs_diff_eq!(g.query_logodds(p, FeatureKind::Pole).logodds, 0.7);
        g.update_cell(p, FeatureKind::Pole, false);
        assert_abs_diff_eq!(
            g.query_logodds(p, FeatureKind::Pole).logodds,
            0.3,
            epsilon = 1e-12
        );
        // The corner grid is untouched.
        assert_eq!(g.query_logodds(p, FeatureKind::Corner).logodds, 0.0);

        let mut g = grid();
        g.update_cell(p, FeatureKind::Corner, false);
        assert_abs_diff_eq!(g.query_logodds(p, FeatureKind::Corner).logodds, -0.4);
    }

    #[test]
    fn values_clamp_at_ten() {
        let p = Point2::new(1.0, 1.0);
        let mut g = grid();
        g.set_logodds(p, FeatureKind::Pole, 9.9);
        for _ in 0..10 {
            g.update_cell(p, FeatureKind::Pole, true);
        }
        assert_eq!(g.query_logodds(p, FeatureKind::Pole).logodds, 10.0);
    }

    #[test]
    fn out_of_extent_is_skipped() {
        let mut g = grid();
        let far = Point2::new(30.0, 0.0);
        assert!(!g.update_cell(far, FeatureKind::Pole, true));
        assert_eq!(g.skipped(), 1);
        let q = g.query_logodds(far, FeatureKind::Pole);
        assert!(!q.in_extent);
        assert_eq!(q.logodds, 0.0);
        assert!(g.contains(Point2::new(29.99, -30.0)));
    }

    #[test]
    fn probability_values() {
        assert_eq!(probability(0.0), 0.5);
        // 1 - 1/(1 + e^0.7) = 0.66818777...
        assert_abs_diff_eq!(probability(0.7), 0.668_187_772_168_166, epsilon = 1e-12);
        // 1 - 1/(1 + e^-10) = 4.5397868702434395e-5
        assert_abs_diff_eq!(probability(-10.0), 4.539_786_870_243_439_5e-5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_uneven_extent() {
        let cfg = SensorModelConfig {
            extent: 60.0,
            cell_size: 0.7,
            ..Default::default()
        };
        assert!(SensorModelGrid::new(cfg).is_err());
    }

    proptest! {
        #[test]
        fn probability_is_a_symmetric_sigmoid(l in -30.0..30.0f64, d in 1e-3..5.0f64) {
            let p = probability(l);
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!(probability(l + d) > p);
            prop_assert!((probability(-l) - (1.0 - p)).abs() < 1e-12);
            prop_assert!((probability(log_odds(p)) - p).abs() < 1e-12);
        }

        #[test]
        fn log_odds_round_trip(l in -5.0..5.0f64) {
            prop_assert!((log_odds(probability(l)) - l).abs() < 1e-12);
        }

        #[test]
        fn updates_commute(seq in proptest::collection::vec(any::<bool>(), 0..12)) {
            let p = Point2::new(-4.0, 2.0);
            let mut a = grid();
            let mut b = grid();
            for &d in &seq { a.update_cell(p, FeatureKind::Pole, d); }
            for &d in seq.iter().rev() { b.update_cell(p, FeatureKind::Pole, d); }
            let hits = seq.iter().filter(|d| **d).count() as f64;
            let misses = seq.len() as f64 - hits;
            let expect = 0.7 * hits - 0.4 * misses;
            let qa = a.query_logodds(p, FeatureKind::Pole).logodds;
            let qb = b.query_logodds(p, FeatureKind::Pole).logodds;
            prop_assert!((qa - expect).abs() < 1e-9);
            prop_assert!((qb - expect).abs() < 1e-9);
        }
    }
}

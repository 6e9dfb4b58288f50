//! Obstacle detection around the vehicle and line-of-sight checks.
//!
//! Lidar points are binned into a square 2.5D grid centred on the vehicle.
//! A cell whose point heights span more than `height_threshold` holds an
//! obstacle. Rays cast from the grid centre give a laser-scan-like range per
//! angular bin, which is compared against the polar position of features that
//! were not matched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AngularBins, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObstacleGridConfig {
    /// Side of the square grid, meters.
    pub extent: f64,
    pub cells_per_side: usize,
    /// Minimum span of point heights in a cell for it to count as occupied.
    pub height_threshold: f64,
}

impl Default for ObstacleGridConfig {
    fn default() -> Self {
        Self {
            extent: 60.0,
            cells_per_side: 120,
            height_threshold: 0.3,
        }
    }
}

impl ObstacleGridConfig {
    pub fn cell_size(&self) -> f64 {
        self.extent / self.cells_per_side as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || self.cells_per_side == 0 {
            return Err(Error::InvalidConfig(
                "obstacle grid needs a positive extent and cell count".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleGrid {
    config: ObstacleGridConfig,
    min_z: Vec<f64>,
    max_z: Vec<f64>,
    occupied: Vec<bool>,
}

impl ObstacleGrid {
    /// An empty grid with no occupied cells.
    pub fn empty(config: ObstacleGridConfig) -> Self {
        let n = config.cells_per_side * config.cells_per_side;
        Self {
            config,
            min_z: vec![f64::INFINITY; n],
            max_z: vec![f64::NEG_INFINITY; n],
            occupied: vec![false; n],
        }
    }

    pub fn config(&self) -> &ObstacleGridConfig {
        &self.config
    }

    pub fn cell_size(&self) -> f64 {
        self.config.cell_size()
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let half = self.config.extent / 2.0;
        let size = self.cell_size();
        let col = ((x + half) / size).floor();
        let row = ((y + half) / size).floor();
        let n = self.config.cells_per_side as f64;
        (col >= 0.0 && col < n && row >= 0.0 && row < n).then_some((col as usize, row as usize))
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.occupied[row * self.config.cells_per_side + col]
    }

    /// Occupancy at a vehicle-frame position; off-grid points are free.
    pub fn occupied_at(&self, p: Point2) -> bool {
        self.cell_of(p.x, p.y)
            .is_some_and(|(c, r)| self.is_occupied(c, r))
    }

    /// Height span of a cell, if any point fell into it.
    pub fn height_span(&self, col: usize, row: usize) -> Option<(f64, f64)> {
        let i = row * self.config.cells_per_side + col;
        (self.min_z[i] <= self.max_z[i]).then(|| (self.min_z[i], self.max_z[i]))
    }

    /// Marks a cell occupied regardless of point heights.
    pub fn set_occupied(&mut self, col: usize, row: usize) {
        self.occupied[row * self.config.cells_per_side + col] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    /// Centre of a cell in the vehicle frame.
    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        let half = self.config.extent / 2.0;
        let size = self.cell_size();
        Point2::new(
            -half + (col as f64 + 0.5) * size,
            -half + (row as f64 + 0.5) * size,
        )
    }
}

/// Builds the obstacle grid from vehicle-frame 3D points. Points outside the
/// grid and non-finite points are ignored.
pub fn build_obstacle_grid(points: &[[f64; 3]], config: ObstacleGridConfig) -> ObstacleGrid {
    let mut grid = ObstacleGrid::empty(config);
    let n = config.cells_per_side;
    for p in points {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            continue;
        }
        if let Some((c, r)) = grid.cell_of(p[0], p[1]) {
            let i = r * n + c;
            grid.min_z[i] = grid.min_z[i].min(p[2]);
            grid.max_z[i] = grid.max_z[i].max(p[2]);
        }
    }
    for i in 0..n * n {
        grid.occupied[i] = grid.max_z[i] - grid.min_z[i] > config.height_threshold;
    }
    grid
}

/// Range to the first obstacle for every angular bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RayScan {
    pub ranges: Vec<f64>,
    pub max_range: f64,
    pub bins: AngularBins,
}

/// Casts one ray per angular bin from the grid centre. Each ray walks every
/// cell it pierces and stops at the first occupied one; the reported range is
/// the distance at which the ray enters that cell.
pub fn ray_cast(grid: &ObstacleGrid, bins: AngularBins) -> RayScan {
    let max_range = grid.config.extent / 2.0;
    let ranges = (0..bins.count())
        .map(|bin| {
            let (s, c) = bins.bearing(bin).sin_cos();
            first_hit(grid, c, s, max_range)
        })
        .collect();
    RayScan {
        ranges,
        max_range,
        bins,
    }
}

/// Grid traversal after Amanatides & Woo, starting at the grid centre.
fn first_hit(grid: &ObstacleGrid, dx: f64, dy: f64, max_range: f64) -> f64 {
    let size = grid.cell_size();
    let n = grid.config.cells_per_side as i64;
    let half = grid.config.extent / 2.0;
    // Ray origin in grid coordinates (cells), at the exact grid centre. The
    // centre is a cell corner, so the first cell depends on the direction.
    let (ox, oy) = (half / size, half / size);
    let dx = if dx.abs() < 1e-15 { 0.0 } else { dx };
    let dy = if dy.abs() < 1e-15 { 0.0 } else { dy };
    let start = |o: f64, d: f64| -> i64 {
        if d < 0.0 && o.fract() == 0.0 {
            o as i64 - 1
        } else {
            o.floor() as i64
        }
    };
    let mut col = start(ox, dx);
    let mut row = start(oy, dy);
    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let boundary = |o: f64, cell: i64, step: i64| -> f64 {
        if step > 0 {
            (cell + 1) as f64 - o
        } else {
            o - cell as f64
        }
    };
    let (mut t_max_c, t_delta_c) = if dx == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (boundary(ox, col, step_c) / dx.abs(), 1.0 / dx.abs())
    };
    let (mut t_max_r, t_delta_r) = if dy == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (boundary(oy, row, step_r) / dy.abs(), 1.0 / dy.abs())
    };
    let mut t_enter = 0.0;
    loop {
        if col < 0 || row < 0 || col >= n || row >= n {
            return max_range;
        }
        let range = t_enter * size;
        if range >= max_range {
            return max_range;
        }
        if grid.is_occupied(col as usize, row as usize) {
            return range.max(f64::MIN_POSITIVE);
        }
        if (t_max_c - t_max_r).abs() < 1e-12 {
            // Through a cell corner: the side cells are only touched.
            t_enter = t_max_c;
            t_max_c += t_delta_c;
            t_max_r += t_delta_r;
            col += step_c;
            row += step_r;
        } else if t_max_c < t_max_r {
            t_enter = t_max_c;
            t_max_c += t_delta_c;
            col += step_c;
        } else {
            t_enter = t_max_r;
            t_max_r += t_delta_r;
            row += step_r;
        }
    }
}

/// Whether the line of sight to a vehicle-frame feature position is blocked.
///
/// Features beyond the scan's range cannot be verified and count as occluded.
/// An obstacle must lie at least one cell short of the feature, so a feature
/// standing in its own supporting structure does not occlude itself.
pub fn is_occluded(scan: &RayScan, feature: Point2, cell_size: f64) -> bool {
    let Ok(polar) = scan.bins.to_polar(feature) else {
        return false;
    };
    if polar.range > scan.max_range {
        return true;
    }
    scan.ranges[polar.bin] < polar.range - cell_size
}

use std::f64::consts::{SQRT_2, TAU};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mapkeep::geometry::{AngularBins, Point2};
use mapkeep::occlusion::{build_obstacle_grid, is_occluded, ray_cast, ObstacleGrid, ObstacleGridConfig};

fn column(x: f64, y: f64) -> [[f64; 3]; 2] {
    [[x, y, 0.0], [x, y, 1.5]]
}

#[test]
fn ring_at_ten_meters_bounds_every_ray() {
    let points: Vec<[f64; 3]> = (0..4000)
        .flat_map(|i| {
            let a = TAU * i as f64 / 4000.0;
            column(10.0 * a.cos(), 10.0 * a.sin())
        })
        .collect();
    let config = ObstacleGridConfig::default();
    let scan = ray_cast(&build_obstacle_grid(&points, config), AngularBins::default());
    for (bin, r) in scan.ranges.iter().enumerate() {
        // A ray may clip the corner of a ring cell up to a half diagonal early.
        assert!((r - 10.0).abs() <= config.cell_size() * SQRT_2, "bin {bin}: {r}");
    }
}

#[test]
fn single_cell_ahead_is_hit_at_its_near_face() {
    let config = ObstacleGridConfig::default();
    let bins = AngularBins::default();
    for bin in (0..360).step_by(17) {
        let a = bins.bearing(bin);
        let grid = build_obstacle_grid(&column(5.0 * a.cos(), 5.0 * a.sin()), config);
        let scan = ray_cast(&grid, bins);
        assert!((scan.ranges[bin] - 5.0).abs() <= config.cell_size() * SQRT_2, "bin {bin}: {}", scan.ranges[bin]);
        assert!(is_occluded(&scan, Point2::new(10.0 * a.cos(), 10.0 * a.sin()), config.cell_size()));
        assert!(!is_occluded(&scan, Point2::new(-10.0 * a.cos(), -10.0 * a.sin()), config.cell_size()));
    }
}

#[test]
fn features_beyond_the_scan_count_as_occluded() {
    let config = ObstacleGridConfig::default();
    let scan = ray_cast(&ObstacleGrid::empty(config), AngularBins::default());
    assert!(!is_occluded(&scan, Point2::new(29.0, 0.0), config.cell_size()));
    assert!(is_occluded(&scan, Point2::new(31.0, 0.0), config.cell_size()));
}

fn points() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        (-32.0..32.0f64, -32.0..32.0f64, -1.0..3.0f64).prop_map(|(x, y, z)| [x, y, z]),
        0..300,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_ignores_point_order(pts in points(), seed: u64) {
        let config = ObstacleGridConfig::default();
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(build_obstacle_grid(&pts, config), build_obstacle_grid(&shuffled, config));
    }

    #[test]
    fn more_obstacles_never_reveal_a_feature(
        base in points(),
        extra in points(),
        features in prop::collection::vec((-35.0..35.0f64, -35.0..35.0f64), 1..50),
    ) {
        let config = ObstacleGridConfig::default();
        let bins = AngularBins::default();
        let mut both = base.clone();
        both.extend_from_slice(&extra);
        let few = ray_cast(&build_obstacle_grid(&base, config), bins);
        let many = ray_cast(&build_obstacle_grid(&both, config), bins);
        for (a, b) in few.ranges.iter().zip(&many.ranges) {
            prop_assert!(b <= a);
        }
        for (x, y) in features {
            let p = Point2::new(x, y);
            if is_occluded(&few, p, config.cell_size()) {
                prop_assert!(is_occluded(&many, p, config.cell_size()));
            }
        }
    }
}

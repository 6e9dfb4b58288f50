use proptest::prelude::*;

use mapkeep::geometry::{Point2, Pose2};
use mapkeep::new_features::optimize::{edge_cost, solve_landmark, GraphConfig, RangeBearingEdge};

fn poses() -> impl Strategy<Value = Vec<Pose2>> {
    prop::collection::vec(
        (-30.0..30.0f64, -30.0..30.0f64, -3.1..3.1f64).prop_map(|(x, y, h)| Pose2::new(x, y, h)),
        2..12,
    )
}

proptest! {
    #[test]
    fn noiseless_edges_pin_the_landmark(
        poses in poses(),
        lx in -10.0..10.0f64,
        ly in -10.0..10.0f64,
        ox in -1.0..1.0f64,
        oy in -1.0..1.0f64,
    ) {
        let landmark = Point2::new(lx, ly);
        prop_assume!(poses.iter().all(|p| p.position().distance(landmark) > 2.0));
        let edges: Vec<_> = poses.iter().map(|p| RangeBearingEdge::from_observation(*p, landmark)).collect();
        let config = GraphConfig::default();
        prop_assert!(edge_cost(&edges, landmark, &config) < 1e-20);
        let solved = solve_landmark(&edges, landmark + Point2::new(ox, oy), &config);
        prop_assert!(solved.position.distance(landmark) < 1e-6);
    }

    #[test]
    fn cost_never_increases(
        poses in poses(),
        noise in prop::collection::vec((-0.3..0.3f64, -0.05..0.05f64), 12),
        guess in (-20.0..20.0f64, -20.0..20.0f64),
    ) {
        let landmark = Point2::new(1.0, 2.0);
        let edges: Vec<_> = poses
            .iter()
            .zip(&noise)
            .map(|(p, (dr, db))| {
                let mut e = RangeBearingEdge::from_observation(*p, landmark);
                e.range = (e.range + dr).max(0.0);
                e.bearing += db;
                e
            })
            .collect();
        let config = GraphConfig::default();
        let initial = Point2::new(guess.0, guess.1);
        let solved = solve_landmark(&edges, initial, &config);
        prop_assert_eq!(solved.cost_history[0], edge_cost(&edges, initial, &config));
        for w in solved.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(*solved.cost_history.last().unwrap(), edge_cost(&edges, solved.position, &config));
    }
}

use std::path::Path;

use proptest::prelude::*;

use mapkeep::campaign::run_campaign;
use mapkeep::config::Scenario;
use mapkeep::geometry::{AngularBins, Point2};
use mapkeep::io::{
    decode_map, decode_report_csv, encode_map, encode_report_csv, load_drive, load_layer, load_map, load_report,
    load_world, save_drive, save_layer, save_map, save_report, save_world, GridEncoding,
};
use mapkeep::map::{Feature, FeatureKind, PriorMap};
use mapkeep::sensor_model::{SensorModelConfig, SensorModelGrid};
use mapkeep::sim::generate_drive;
use mapkeep::Error;

fn small() -> Scenario {
    let mut s = Scenario {
        weeks: 2,
        ..Scenario::default()
    };
    s.world.feature_count = 40;
    s.world.route.half_x = 100.0;
    s.world.route.half_y = 50.0;
    s.world.route.corner_radius = 20.0;
    s
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.1 + 0.2), Just(1.0 / 3.0), Just(f64::MIN_POSITIVE), Just(-0.0)]
}

type FeatureSpec = (f64, f64, bool, f64, Vec<(usize, f64, f64)>);

fn features() -> impl Strategy<Value = Vec<FeatureSpec>> {
    prop::collection::vec(
        (
            finite(),
            finite(),
            any::<bool>(),
            0.01..50.0f64,
            prop::collection::vec((0..360usize, 0.0..60.0f64, finite()), 0..10),
        ),
        0..20,
    )
}

fn build(specs: &[FeatureSpec], cells: &[(f64, f64, bool)]) -> (PriorMap, SensorModelGrid) {
    let bins = AngularBins::default();
    let mut map = PriorMap::new(bins);
    for (x, y, pole, height, bins_set) in specs {
        let id = map.allocate_id();
        let kind = if *pole { FeatureKind::Pole } else { FeatureKind::Corner };
        let mut f = Feature::new(id, Point2::new(*x, *y), kind, *height, 0.125, bins).unwrap();
        for &(b, r, l) in bins_set {
            f.visibility.ranges[b] = r;
            f.visibility.logodds[b] = l;
        }
        f.visibility.volume_at_last_maintenance = f.visibility.volume();
        map.insert(f).unwrap();
    }
    let mut grid = SensorModelGrid::new(SensorModelConfig::default()).unwrap();
    for &(x, y, hit) in cells {
        grid.update_cell(Point2::new(x, y), FeatureKind::Pole, hit);
        grid.update_cell(Point2::new(-y, x), FeatureKind::Corner, !hit);
    }
    (map, grid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn maps_round_trip_bit_exactly(
        specs in features(),
        cells in prop::collection::vec((-35.0..35.0f64, -35.0..35.0f64, any::<bool>()), 0..50),
        version in 0u32..1000,
    ) {
        let (mut map, grid) = build(&specs, &cells);
        map.version = version;
        for encoding in [GridEncoding::Decimal, GridEncoding::Base64] {
            let text = encode_map(&map, &grid, encoding);
            let (m, g) = decode_map(&text, Path::new("map.json")).unwrap();
            for (a, b) in m.features.iter().zip(&map.features) {
                prop_assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
                prop_assert_eq!(a.visibility.volume().to_bits(), b.visibility.volume().to_bits());
            }
            prop_assert_eq!(&m, &map);
            prop_assert_eq!(m.next_id(), map.next_id());
            prop_assert_eq!(&g, &grid);
            prop_assert_eq!(encode_map(&m, &g, encoding), text);
        }
    }
}

#[test]
fn campaign_artifacts_survive_the_disk() {
    let scenario = small();
    let result = run_campaign(&scenario).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    save_world(&root.join("world.json"), &result.world).unwrap();
    assert_eq!(load_world(&root.join("world.json")).unwrap(), result.world);

    let drive = generate_drive(&result.world, 1, &scenario.drive, &scenario.detector);
    save_drive(&root.join("drives/week_001.jsonl"), &drive).unwrap();
    assert_eq!(load_drive(&root.join("drives/week_001.jsonl")).unwrap(), drive);

    let state = &result.state;
    save_map(&root.join("maps/final.json"), &state.map, &state.sensor_model, GridEncoding::Base64).unwrap();
    let (map, grid) = load_map(&root.join("maps/final.json")).unwrap();
    assert_eq!(map, state.map);
    assert_eq!(grid, state.sensor_model);

    save_layer(&root.join("layer.json"), &state.layer).unwrap();
    assert_eq!(load_layer(&root.join("layer.json")).unwrap(), state.layer);

    save_report(root, &result.report).unwrap();
    assert_eq!(load_report(root).unwrap(), result.report);
    let csv = std::fs::read_to_string(root.join("report.csv")).unwrap();
    assert_eq!(csv, encode_report_csv(&result.report));
    assert_eq!(decode_report_csv(&csv, Path::new("report.csv")).unwrap(), result.report.rows);
}

#[test]
fn missing_and_malformed_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert!(matches!(load_map(&missing), Err(Error::Io { .. })));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"format_version\": 1, \"week\": 0, \"steps\": 2}\n{\"timestamp\": 0.0}\n").unwrap();
    assert!(matches!(load_drive(&bad), Err(Error::Parse { line: 2, .. })));

    let header = "week,pole_min_height\n0,1.6\n";
    assert!(decode_report_csv(header, Path::new("r.csv")).is_err());
}

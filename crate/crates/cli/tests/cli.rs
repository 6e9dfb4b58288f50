use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/small.toml")
}

fn mapkeep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapkeep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mapkeep(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn staged_run_matches_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let scenario = fixture();
    let csv = ok(&["campaign", "--scenario", s(&scenario), "--out", s(&a)]);
    ok(&["world", "gen", "--scenario", s(&scenario), "--out", s(&b)]);
    ok(&["drive", "--out", s(&b)]);
    assert_eq!(ok(&["maintain", "--out", s(&b)]), csv);

    assert_eq!(read(a.join("report.csv")), read(b.join("report.csv")));
    for name in ["initial", "week_000", "week_001", "week_002"] {
        let file = format!("maps/{name}.json");
        assert_eq!(read(a.join(&file)), read(b.join(&file)), "{file}");
    }
    assert_eq!(read(a.join("layers/week_002.json")), read(b.join("layers/week_002.json")));
}

#[test]
fn report_has_row_columns_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let scenario = fixture();
    ok(&["campaign", "--scenario", s(&scenario), "--out", s(&a), "--seed", "9", "--weeks", "2"]);
    ok(&["campaign", "--scenario", s(&scenario), "--out", s(&b), "--seed", "9", "--weeks", "2"]);
    let report = ok(&["report", "--out", s(&a)]);
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "week,pole_min_height,corner_min_height,resets,features_added,features_removed,total_features,strong_corrections,rmse_m"
    );
    assert_eq!(lines.count(), 2);
    assert_eq!(read(a.join("report.csv")), read(b.join("report.csv")));
    assert_eq!(read(a.join("maps/week_001.json")), read(b.join("maps/week_001.json")));
    assert!(fs::read_to_string(a.join("scenario.toml")).unwrap().contains("seed = 9"));
}

#[test]
fn cadence_flag_skips_maintenance_weeks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let csv = ok(&["campaign", "--scenario", s(&fixture()), "--out", s(&out), "--cadence", "2"]);
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    // Week 0 has no maintenance, so nothing can be added or removed.
    assert_eq!(rows[0][4], "0");
    assert_eq!(rows[0][5], "0");
}

#[test]
fn render_writes_one_svg_per_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    ok(&["campaign", "--scenario", s(&fixture()), "--out", s(&out), "--weeks", "2", "--render"]);
    let first = read(out.join("render/week_001.svg"));
    assert!(first.starts_with(b"<svg"));
    ok(&["render", "--out", s(&out)]);
    // Re-rendering from files draws the route centre line instead of the
    // driven path, so only check the map layer matches.
    let again = fs::read_to_string(out.join("render/week_001.svg")).unwrap();
    assert!(again.contains("map version"));
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();

    let out = mapkeep(&["campaign", "--scenario", "/no/such/file.toml", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.toml"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nweeks = \"many\"\n").unwrap();
    let out = mapkeep(&["campaign", "--scenario", s(&bad), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml:2:"));

    let out = mapkeep(&["maintain", "--out", s(&dir.path().join("empty"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("world gen"));

    let out = mapkeep(&["campaign", "--cadence", "0", "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cadence"));
}

#[test]
fn unsupported_map_version_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    ok(&["campaign", "--scenario", s(&fixture()), "--out", s(&out), "--weeks", "1"]);
    let path = out.join("maps/week_000.json");
    let text = fs::read_to_string(&path).unwrap().replacen("\"format_version\": 1", "\"format_version\": 7", 1);
    fs::write(&path, text).unwrap();
    let res = mapkeep(&["render", "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("unsupported format version 7"));
}

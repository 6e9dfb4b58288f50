//! Multi-week runs over a simulated world.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::drive::DriveLog;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::localization::DrivableAreas;
use crate::map::{Feature, PriorMap};
use crate::pipeline::{angular_bins, maintain, process_drive, DriveSummary, MaintenanceOutcome, MapState};
use crate::sim::{generate_drive, generate_world, stream_rng, Purpose, WorldTimeline};

/// One report row per simulated week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekRow {
    pub week: u32,
    pub pole_min_height: f64,
    pub corner_min_height: f64,
    pub resets: u32,
    pub features_added: usize,
    pub features_removed: usize,
    pub total_features: usize,
    pub strong_corrections: u32,
    pub rmse_m: f64,
}

impl WeekRow {
    /// Field names in declaration order; the report CSV header.
    pub const COLUMNS: [&'static str; 9] = [
        "week",
        "pole_min_height",
        "corner_min_height",
        "resets",
        "features_added",
        "features_removed",
        "total_features",
        "strong_corrections",
        "rmse_m",
    ];
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunReport {
    /// Size of the map before the first week.
    pub initial_features: usize,
    pub rows: Vec<WeekRow>,
}

impl RunReport {
    /// Rows whose total does not equal the previous total plus additions
    /// minus removals.
    pub fn accounting_violations(&self) -> Vec<u32> {
        let mut previous = self.initial_features;
        let mut bad = Vec::new();
        for row in &self.rows {
            if row.total_features + row.features_removed != previous + row.features_added {
                bad.push(row.week);
            }
            previous = row.total_features;
        }
        bad
    }
}

/// The week-0 map: every feature alive and detectable at the start, with
/// survey noise on its position.
pub fn initial_map(world: &WorldTimeline, scenario: &Scenario) -> Result<PriorMap> {
    let bins = angular_bins(&scenario.maintenance)?;
    let mut map = PriorMap::new(bins);
    let mut rng = stream_rng(scenario.seed, 0, Purpose::InitialMap);
    let noise = Normal::new(0.0, scenario.initial_map_sigma.max(0.0)).expect("finite sigma");
    for f in world.alive(0) {
        let (nx, ny) = (noise.sample(&mut rng), noise.sample(&mut rng));
        if !(f.height > scenario.detector.min_height(f.kind, 0)) {
            continue;
        }
        let id = map.allocate_id();
        let feature = Feature::new(id, f.position + Point2::new(nx, ny), f.kind, f.height, f.geom_param, bins)?
            .with_label(f.label);
        map.insert(feature)?;
    }
    Ok(map)
}

/// Everything observed about one week.
#[derive(Debug, Clone)]
pub struct WeekRecord {
    pub row: WeekRow,
    pub drive: DriveSummary,
    pub maintenance: Option<MaintenanceOutcome>,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub world: WorldTimeline,
    pub initial_map: PriorMap,
    pub report: RunReport,
    pub weeks: Vec<WeekRecord>,
    /// Map after each week's drive and maintenance.
    pub maps: Vec<PriorMap>,
    pub state: MapState,
}

impl CampaignResult {
    /// The map in use while driving `week`.
    pub fn map_before(&self, week: u32) -> &PriorMap {
        match week {
            0 => &self.initial_map,
            w => &self.maps[w as usize - 1],
        }
    }

    pub fn map_after(&self, week: u32) -> &PriorMap {
        &self.maps[week as usize]
    }
}

/// Processes one week's drive and, at cadence boundaries, runs maintenance.
pub fn step_week(state: &mut MapState, drive: &DriveLog, areas: &DrivableAreas, scenario: &Scenario) -> Result<WeekRecord> {
    let week = drive.week;
    let summary = process_drive(state, drive, areas, &scenario.maintenance).map_err(|e| Error::Campaign {
        week,
        source: Box::new(e),
    })?;
    let maintenance = scenario
        .maintains_after(week)
        .then(|| maintain(state, &scenario.maintenance));
    let (pole, corner) = scenario.detector.min_heights(week);
    let row = WeekRow {
        week,
        pole_min_height: pole,
        corner_min_height: corner,
        resets: summary.resets,
        features_added: maintenance.as_ref().map_or(0, |m| m.added()),
        features_removed: maintenance.as_ref().map_or(0, |m| m.removed.len()),
        total_features: state.map.len(),
        strong_corrections: summary.strong_corrections,
        rmse_m: summary.rmse,
    };
    Ok(WeekRecord {
        row,
        drive: summary,
        maintenance,
    })
}

pub fn run_campaign(scenario: &Scenario) -> Result<CampaignResult> {
    run_campaign_with(scenario, |_, _, _| Ok(()))
}

/// Runs every week of the scenario, handing each week's record, map state and
/// drive to `observer` as soon as it is complete.
pub fn run_campaign_with(
    scenario: &Scenario,
    mut observer: impl FnMut(&WeekRecord, &MapState, &DriveLog) -> Result<()>,
) -> Result<CampaignResult> {
    scenario.validate()?;
    let world = generate_world(&scenario.world, scenario.seed, scenario.weeks)?;
    let initial = initial_map(&world, scenario)?;
    let mut state = MapState::new(initial.clone(), &scenario.maintenance)?;
    let mut report = RunReport {
        initial_features: initial.len(),
        rows: Vec::new(),
    };
    let mut weeks = Vec::new();
    let mut maps = Vec::new();

    for week in 0..scenario.weeks {
        let drive = generate_drive(&world, week, &scenario.drive, &scenario.detector);
        let record = step_week(&mut state, &drive, &world.drivable, scenario)?;
        report.rows.push(record.row.clone());
        observer(&record, &state, &drive)?;
        weeks.push(record);
        maps.push(state.map.clone());
    }

    Ok(CampaignResult {
        world,
        initial_map: initial,
        report,
        weeks,
        maps,
        state,
    })
}

//! Per-drive processing and the maintenance cycle.

use serde::{Deserialize, Serialize};

use crate::config::MaintenanceConfig;
use crate::drive::{DriveLog, Timestep};
use crate::error::Result;
use crate::geometry::{to_vehicle, AngularBins, Point2, Pose2};
use crate::localization::{
    check_reset, correct, count_strong_correction, predict, try_initialize, Correction, DrivableAreas, FilterState,
};
use crate::map::{FeatureId, Observation, PriorMap};
use crate::matcher::{match_observations, retrieve_local, IcpConfig, MatchResult};
use crate::new_features::{MergeOutcome, NewFeatureLayer};
use crate::occlusion::{build_obstacle_grid, is_occluded, ray_cast};
use crate::sensor_model::SensorModelGrid;
use crate::visibility::{purge_transient, update_visibility};

/// Drive timestamps restart at zero; candidates are ordered across drives by
/// offsetting each drive by this many seconds per week.
pub const WEEK_SECONDS: f64 = 604_800.0;

/// The three maintained layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MapState {
    pub map: PriorMap,
    pub sensor_model: SensorModelGrid,
    pub layer: NewFeatureLayer,
}

impl MapState {
    pub fn new(map: PriorMap, config: &MaintenanceConfig) -> Result<Self> {
        Ok(Self {
            map,
            sensor_model: SensorModelGrid::new(config.sensor_model)?,
            layer: NewFeatureLayer::new(config.layer),
        })
    }
}

/// Result of localising one timestep.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    /// Estimate after correction; `None` while the filter is not running.
    pub pose: Option<Pose2>,
    pub matching: Option<MatchResult>,
    pub correction: Option<Correction>,
    pub strong: bool,
    pub reset: bool,
    /// Whether the estimate is good enough to update the map from.
    pub confident: bool,
}

/// Filter plus the bookkeeping needed to (re)initialise it from GNSS.
#[derive(Debug, Clone)]
#[derive(Default)]
pub struct Localizer {
    pub filter: FilterState,
    anchor: Option<Point2>,
}


impl Localizer {
    pub fn step(&mut self, map: &PriorMap, ts: &Timestep, areas: &DrivableAreas, config: &MaintenanceConfig) -> StepOutcome {
        let cfg = &config.localization;
        let mut out = StepOutcome::default();
        if self.filter.initialized {
            predict(&mut self.filter, ts.odometry, cfg);
        } else {
            let Some(fix) = ts.gnss else { return out };
            match self.anchor {
                Some(anchor) if anchor.distance(fix.position) >= cfg.min_init_baseline => {
                    if try_initialize(&mut self.filter, anchor, fix.position, ts.speed, cfg) {
                        self.anchor = None;
                    }
                }
                Some(_) => {}
                None => self.anchor = Some(fix.position),
            }
            if !self.filter.initialized {
                return out;
            }
        }

        let pose = self.filter.pose;
        let local = retrieve_local(map, &pose, config.retrieval_radius);
        let icp = IcpConfig {
            match_gate: (cfg.gate_sigma_scale * self.filter.position_sigma()).clamp(config.icp.match_gate, cfg.max_gate.max(config.icp.match_gate)),
            ..config.icp
        };
        let matching = match_observations(&local, &ts.observations, &pose, &icp);
        if let Some(c) = correct(&mut self.filter, &matching, cfg) {
            out.strong = count_strong_correction(&mut self.filter, c, pose.heading, cfg.lateral_threshold);
            out.correction = Some(c);
        }
        if check_reset(&mut self.filter, areas) {
            out.reset = true;
            return out;
        }
        out.confident = self.filter.position_sigma() < config.confident_sigma;
        out.pose = Some(self.filter.pose);
        out.matching = Some(matching);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSummary {
    pub week: u32,
    pub steps: usize,
    pub localized_steps: usize,
    pub confident_steps: usize,
    pub resets: u32,
    pub strong_corrections: u32,
    /// Root-mean-square position error over localised steps, when the log
    /// carries ground truth.
    pub rmse: f64,
    pub candidates_ingested: usize,
}

#[derive(Default)]
struct ErrorAccumulator {
    sum: f64,
    n: usize,
}

impl ErrorAccumulator {
    fn add(&mut self, estimate: Option<Pose2>, truth: Option<Pose2>) {
        if let (Some(e), Some(t)) = (estimate, truth) {
            self.sum += e.position().distance(t.position()).powi(2);
            self.n += 1;
        }
    }

    fn rmse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.sum / self.n as f64).sqrt()
        }
    }
}

fn finish(localizer: &Localizer, errors: &ErrorAccumulator, summary: &mut DriveSummary) {
    summary.resets = localizer.filter.reset_count;
    summary.strong_corrections = localizer.filter.strong_correction_count;
    summary.rmse = errors.rmse();
}

/// Localises a drive against a fixed map without touching it.
pub fn localize_drive(map: &PriorMap, drive: &DriveLog, areas: &DrivableAreas, config: &MaintenanceConfig) -> Result<DriveSummary> {
    drive.validate()?;
    let mut localizer = Localizer::default();
    let mut errors = ErrorAccumulator::default();
    let mut summary = DriveSummary {
        week: drive.week,
        steps: drive.steps.len(),
        ..DriveSummary::default()
    };
    for ts in &drive.steps {
        let out = localizer.step(map, ts, areas, config);
        summary.localized_steps += out.pose.is_some() as usize;
        summary.confident_steps += out.confident as usize;
        errors.add(out.pose, ts.true_pose);
    }
    finish(&localizer, &errors, &mut summary);
    Ok(summary)
}

/// Localises a drive and feeds every confident timestep into the sensor
/// model, the visibility vectors and the new-feature layer.
pub fn process_drive(state: &mut MapState, drive: &DriveLog, areas: &DrivableAreas, config: &MaintenanceConfig) -> Result<DriveSummary> {
    drive.validate()?;
    let mut localizer = Localizer::default();
    let mut errors = ErrorAccumulator::default();
    let mut summary = DriveSummary {
        week: drive.week,
        steps: drive.steps.len(),
        ..DriveSummary::default()
    };
    for ts in &drive.steps {
        let out = localizer.step(&state.map, ts, areas, config);
        summary.localized_steps += out.pose.is_some() as usize;
        errors.add(out.pose, ts.true_pose);
        if !out.confident {
            continue;
        }
        summary.confident_steps += 1;
        let (Some(pose), Some(matching)) = (out.pose, out.matching) else {
            continue;
        };
        let timestamp = drive.week as f64 * WEEK_SECONDS + ts.timestamp;
        summary.candidates_ingested += update_layers(state, ts, &pose, &matching, timestamp, drive.week, config);
    }
    finish(&localizer, &errors, &mut summary);
    Ok(summary)
}

/// Sensor-model, visibility and new-feature updates for one confident
/// timestep. Returns the number of unmatched observations ingested.
pub fn update_layers(
    state: &mut MapState,
    ts: &Timestep,
    pose: &Pose2,
    matching: &MatchResult,
    timestamp: f64,
    drive: u32,
    config: &MaintenanceConfig,
) -> usize {
    let bins = state.map.bins;
    let obstacles = build_obstacle_grid(&ts.points3d, config.obstacle_grid);
    let scan = ray_cast(&obstacles, bins);
    let cell = obstacles.cell_size();

    // Misses first decide occlusion against the scan, then every cell update
    // lands before any visibility vector reads the grid.
    let mut misses: Vec<(FeatureId, bool)> = Vec::with_capacity(matching.unmatched_map.len());
    for &id in &matching.unmatched_map {
        let Some(f) = state.map.get(id) else { continue };
        let Ok(local) = to_vehicle(pose, f.position) else { continue };
        let occluded = is_occluded(&scan, local, cell);
        if !occluded {
            state.sensor_model.update_cell(local, f.kind, false);
        }
        misses.push((id, occluded));
    }
    for &(_, oi) in &matching.matched {
        let o = &ts.observations[oi];
        state.sensor_model.update_cell(o.position, o.kind, true);
    }

    for &(id, _) in &matching.matched {
        if let Some(f) = state.map.get_mut(id) {
            update_visibility(f, pose, true, false, &state.sensor_model, bins);
        }
    }
    for (id, occluded) in misses {
        if let Some(f) = state.map.get_mut(id) {
            update_visibility(f, pose, false, occluded, &state.sensor_model, bins);
        }
    }

    let unmatched: Vec<Observation> = matching
        .unmatched_obs
        .iter()
        .map(|&i| ts.observations[i].clone())
        .collect();
    state.layer.ingest_unmatched(&unmatched, pose, timestamp, drive);
    unmatched.len()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaintenanceOutcome {
    pub merge: MergeOutcome,
    pub removed: Vec<FeatureId>,
    pub clustered: usize,
    pub expired: usize,
}

impl MaintenanceOutcome {
    pub fn added(&self) -> usize {
        self.merge.merged.len()
    }
}

/// One maintenance cycle: reconcile and promote candidates, drop stale
/// ones, purge transient features, and bump the map version.
pub fn maintain(state: &mut MapState, config: &MaintenanceConfig) -> MaintenanceOutcome {
    let clustered = state.layer.cluster_weekly();
    state.layer.optimize_positions();
    let merge = state.layer.select_and_merge(&mut state.map);
    let expired = state.layer.expire();
    let removed = purge_transient(&mut state.map, config.purge_threshold);
    state.layer.finish_cycle();
    state.map.version += 1;
    MaintenanceOutcome {
        merge,
        removed,
        clustered,
        expired,
    }
}

/// Bins implied by the configured angular resolution.
pub fn angular_bins(config: &MaintenanceConfig) -> Result<AngularBins> {
    AngularBins::from_resolution_deg(config.angular_resolution_deg)
}

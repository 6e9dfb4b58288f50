//! Ground truth for a whole campaign: features with lifetimes, occluders and
//! the drivable area.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::localization::DrivableAreas;
use crate::map::{FeatureKind, SemanticLabel, MAX_POLE_DIAMETER};
use crate::sim::route::Route;
use crate::sim::{stream_rng, Purpose};

/// A stretch of route, by arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stretch {
    pub start: f64,
    pub length: f64,
}

impl Stretch {
    pub fn contains(&self, s: f64, route_length: f64) -> bool {
        (s - self.start).rem_euclid(route_length) <= self.length
    }
}

/// Route stretch whose features are all short.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub stretch: Stretch,
    pub min_height: f64,
    pub max_height: f64,
    /// Spacing between consecutive features on each side, meters.
    pub spacing: f64,
}

/// Kills the `count` features closest to the route point at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathEvent {
    pub week: u32,
    pub at: f64,
    pub count: usize,
}

/// New features along the route, `spacing` meters apart, starting at `at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthEvent {
    pub week: u32,
    pub at: f64,
    pub count: usize,
    pub spacing: f64,
    pub lateral: f64,
    pub kind: FeatureKind,
    pub height: f64,
    /// Free-form tag carried onto the born features.
    #[serde(default)]
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub route: Route,
    pub feature_count: usize,
    pub lateral_min: f64,
    pub lateral_max: f64,
    pub min_spacing: f64,
    pub pole_fraction: f64,
    pub pole_height: [f64; 2],
    pub corner_height: [f64; 2],
    /// Stretches left without features.
    pub sparse_zones: Vec<Stretch>,
    pub corridor: Option<Corridor>,
    pub deaths: Vec<DeathEvent>,
    pub births: Vec<BirthEvent>,
    pub drivable_half_width: f64,
    pub parked_cars: usize,
    pub moving_occluders: usize,
    pub occluder_length: f64,
    pub occluder_width: f64,
    pub occluder_height: f64,
    pub parked_lateral: f64,
    pub moving_lateral: f64,
    pub moving_speed: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            route: Route::default(),
            feature_count: 200,
            lateral_min: 7.0,
            lateral_max: 14.0,
            min_spacing: 6.0,
            pole_fraction: 0.6,
            pole_height: [2.5, 8.0],
            corner_height: [3.0, 12.0],
            sparse_zones: Vec::new(),
            corridor: None,
            deaths: Vec::new(),
            births: Vec::new(),
            drivable_half_width: 6.0,
            parked_cars: 12,
            moving_occluders: 4,
            occluder_length: 4.5,
            occluder_width: 1.8,
            occluder_height: 1.5,
            parked_lateral: 4.5,
            moving_lateral: -2.5,
            moving_speed: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFeature {
    pub id: u64,
    pub position: Point2,
    pub kind: FeatureKind,
    pub height: f64,
    pub geom_param: f64,
    pub label: SemanticLabel,
    pub birth_week: u32,
    /// First week in which the feature no longer exists.
    pub death_week: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub tag: String,
}

impl TruthFeature {
    pub fn alive(&self, week: u32) -> bool {
        self.birth_week <= week && week < self.death_week
    }
}

/// Box-shaped obstacle, either parked or shuttling along a straight segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub week: u32,
    pub start: Pose2,
    /// Far end of the path for moving occluders.
    pub end: Option<Point2>,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl Occluder {
    /// Footprint pose at time `t` seconds into the drive.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        let Some(end) = self.end else {
            return self.start;
        };
        let from = self.start.position();
        let span = from.distance(end);
        if span == 0.0 || self.speed == 0.0 {
            return self.start;
        }
        // Back and forth along the segment.
        let travelled = (self.speed * t).rem_euclid(2.0 * span);
        let along = if travelled <= span { travelled } else { 2.0 * span - travelled };
        let p = from + (end - from) * (along / span);
        Pose2::new(p.x, p.y, self.start.heading)
    }

    /// Footprint corners at time `t`, counter-clockwise.
    pub fn corners(&self, t: f64) -> [Point2; 4] {
        let pose = self.pose_at(t);
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
            .map(|(x, y)| Point2::new(x, y).rotated(pose.heading) + pose.position())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldTimeline {
    pub seed: u64,
    pub route: Route,
    pub features: Vec<TruthFeature>,
    pub occluders: Vec<Occluder>,
    pub drivable: DrivableAreas,
    pub weeks: u32,
}

impl WorldTimeline {
    pub fn alive(&self, week: u32) -> impl Iterator<Item = &TruthFeature> {
        self.features.iter().filter(move |f| f.alive(week))
    }

    pub fn occluders_in(&self, week: u32) -> impl Iterator<Item = &Occluder> {
        self.occluders.iter().filter(move |o| o.week == week)
    }

    /// Nearest feature alive in `week`, with its distance.
    pub fn nearest_alive(&self, p: Point2, week: u32) -> Option<(&TruthFeature, f64)> {
        self.alive(week)
            .map(|f| (f, f.position.distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn attributes(kind: FeatureKind, rng: &mut ChaCha8Rng) -> (f64, SemanticLabel) {
    match kind {
        FeatureKind::Pole => (rng.random_range(0.08..MAX_POLE_DIAMETER - 0.02), SemanticLabel::Pole),
        FeatureKind::Corner => (
            rng.random_range(std::f64::consts::FRAC_PI_3..2.0 * std::f64::consts::FRAC_PI_3),
            SemanticLabel::Building,
        ),
    }
}

/// Builds the reproducible ground truth for `weeks` weeks.
pub fn generate_world(config: &WorldConfig, seed: u64, weeks: u32) -> Result<WorldTimeline> {
    config.route.validate()?;
    if !(config.lateral_min > config.drivable_half_width && config.lateral_max >= config.lateral_min) {
        return Err(Error::InvalidConfig(
            "features must lie beyond the drivable band".into(),
        ));
    }
    let route = config.route;
    let length = route.length();
    let mut rng = stream_rng(seed, 0, Purpose::World);
    let mut features: Vec<TruthFeature> = Vec::new();
    let never = u32::MAX;

    let in_zone = |s: f64| {
        config.sparse_zones.iter().any(|z| z.contains(s, length))
            || config.corridor.is_some_and(|c| c.stretch.contains(s, length))
    };
    let clear = |features: &[TruthFeature], p: Point2, spacing: f64| {
        features.iter().all(|f| f.position.distance(p) >= spacing)
    };

    if let Some(c) = config.corridor {
        let per_side = (c.stretch.length / c.spacing).floor() as usize;
        for side in [1.0, -1.0] {
            for i in 0..per_side {
                let s = c.stretch.start + (i as f64 + rng.random_range(0.3..0.7)) * c.spacing;
                let lateral = side * rng.random_range(config.lateral_min..config.lateral_max);
                let kind = if rng.random_bool(config.pole_fraction) {
                    FeatureKind::Pole
                } else {
                    FeatureKind::Corner
                };
                let (geom_param, label) = attributes(kind, &mut rng);
                features.push(TruthFeature {
                    id: features.len() as u64,
                    position: route.point_at(s, lateral),
                    kind,
                    height: rng.random_range(c.min_height..c.max_height),
                    geom_param,
                    label,
                    birth_week: 0,
                    death_week: never,
                    tag: "corridor".into(),
                });
            }
        }
    }

    let wanted = features.len() + config.feature_count;
    let mut attempts = 0usize;
    while features.len() < wanted {
        attempts += 1;
        if attempts > 200 * config.feature_count.max(1) {
            return Err(Error::InfeasibleWorld(format!(
                "placed {} of {} features with spacing {} m",
                features.len() + config.feature_count - wanted,
                config.feature_count,
                config.min_spacing
            )));
        }
        let s = rng.random_range(0.0..length);
        if in_zone(s) {
            continue;
        }
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lateral = side * rng.random_range(config.lateral_min..config.lateral_max);
        let p = route.point_at(s, lateral);
        if !clear(&features, p, config.min_spacing) {
            continue;
        }
        let kind = if rng.random_bool(config.pole_fraction) {
            FeatureKind::Pole
        } else {
            FeatureKind::Corner
        };
        let [lo, hi] = match kind {
            FeatureKind::Pole => config.pole_height,
            FeatureKind::Corner => config.corner_height,
        };
        let height = rng.random_range(lo..hi);
        let (geom_param, label) = attributes(kind, &mut rng);
        features.push(TruthFeature {
            id: features.len() as u64,
            position: p,
            kind,
            height,
            geom_param,
            label,
            birth_week: 0,
            death_week: never,
            tag: String::new(),
        });
    }

    for death in &config.deaths {
        let centre = route.point_at(death.at, 0.0);
        let mut alive: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].alive(death.week))
            .collect();
        alive.sort_by(|&a, &b| {
            features[a]
                .position
                .distance(centre)
                .total_cmp(&features[b].position.distance(centre))
        });
        if alive.len() < death.count {
            return Err(Error::InfeasibleWorld(format!(
                "only {} features alive for a death event of {}",
                alive.len(),
                death.count
            )));
        }
        for &i in &alive[..death.count] {
            features[i].death_week = death.week;
        }
    }

    for birth in &config.births {
        for k in 0..birth.count {
            // Slide forward until clear of every other feature.
            let mut s = birth.at + k as f64 * birth.spacing;
            let mut p = route.point_at(s, birth.lateral);
            let mut tries = 0;
            while !clear(&features, p, config.min_spacing.min(3.0)) {
                s += 0.5;
                p = route.point_at(s, birth.lateral);
                tries += 1;
                if tries > 200 {
                    return Err(Error::InfeasibleWorld(format!(
                        "no room for a birth near s = {}",
                        birth.at
                    )));
                }
            }
            let (geom_param, label) = attributes(birth.kind, &mut rng);
            features.push(TruthFeature {
                id: features.len() as u64,
                position: p,
                kind: birth.kind,
                height: birth.height,
                geom_param,
                label,
                birth_week: birth.week,
                death_week: never,
                tag: birth.tag.clone(),
            });
        }
    }

    let mut occluders = Vec::new();
    for week in 0..weeks {
        let mut rng = stream_rng(seed, week, Purpose::Occluders);
        for _ in 0..config.parked_cars {
            let s = rng.random_range(0.0..length);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            occluders.push(Occluder {
                week,
                start: route.pose_at(s, side * config.parked_lateral),
                end: None,
                speed: 0.0,
                length: config.occluder_length,
                width: config.occluder_width,
                height: config.occluder_height,
            });
        }
        let mut placed = 0;
        let mut tries = 0;
        while placed < config.moving_occluders && tries < 1000 {
            tries += 1;
            let s = rng.random_range(0.0..length);
            let span = rng.random_range(40.0..120.0);
            if !route.is_straight(s, span) {
                continue;
            }
            occluders.push(Occluder {
                week,
                start: route.pose_at(s, config.moving_lateral),
                end: Some(route.point_at(s + span, config.moving_lateral)),
                speed: config.moving_speed,
                length: config.occluder_length,
                width: config.occluder_width,
                height: config.occluder_height,
            });
            placed += 1;
        }
    }

    Ok(WorldTimeline {
        seed,
        route,
        features,
        occluders,
        drivable: route.drivable_areas(config.drivable_half_width, 2.0),
        weeks,
    })
}

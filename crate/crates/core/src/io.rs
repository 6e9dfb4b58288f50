//! On-disk formats.
//!
//! Maps, layers and worlds are JSON documents carrying a `format_version`.
//! Sensor-model grids are written either as decimal arrays or as base64 of
//! little-endian `f64` bytes. Drive logs are JSON lines: a header line, then
//! one timestep per line. Reports are CSV with one column per [`WeekRow`]
//! field.
//!
//! Floats are written with shortest round-trip formatting, so every format
//! reloads bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::campaign::{RunReport, WeekRow};
use crate::drive::{DriveLog, Timestep};
use crate::error::{Error, Result};
use crate::geometry::AngularBins;
use crate::map::{Feature, FeatureKind, PriorMap};
use crate::new_features::NewFeatureLayer;
use crate::sensor_model::{SensorModelConfig, SensorModelGrid};
use crate::sim::WorldTimeline;

pub const MAP_FORMAT_VERSION: u32 = 1;
pub const LAYER_FORMAT_VERSION: u32 = 1;
pub const DRIVE_FORMAT_VERSION: u32 = 1;
pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridEncoding {
    Decimal,
    #[default]
    Base64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapHeader {
    pub angular_resolution_deg: f64,
    pub bins: usize,
    pub sensor_model: SensorModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum GridCells {
    Decimal { pole: Vec<f64>, corner: Vec<f64> },
    Base64 { pole: String, corner: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub format_version: u32,
    pub header: MapHeader,
    pub map_version: u32,
    pub next_id: u64,
    pub features: Vec<Feature>,
    pub sensor_model: GridCells,
    /// Updates that fell outside the grid.
    pub sensor_model_skipped: u64,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

fn encode_cells(cells: &[f64]) -> String {
    let bytes: Vec<u8> = cells.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_cells(text: &str, path: &Path) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        column: 0,
        message: format!("grid cells: {e}"),
    })?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: format!("grid cells: {} bytes is not a whole number of f64", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect())
}

impl MapFile {
    pub fn new(map: &PriorMap, grid: &SensorModelGrid, encoding: GridEncoding) -> Self {
        let (pole, corner) = (grid.cells(FeatureKind::Pole), grid.cells(FeatureKind::Corner));
        let sensor_model = match encoding {
            GridEncoding::Decimal => GridCells::Decimal {
                pole: pole.to_vec(),
                corner: corner.to_vec(),
            },
            GridEncoding::Base64 => GridCells::Base64 {
                pole: encode_cells(pole),
                corner: encode_cells(corner),
            },
        };
        Self {
            format_version: MAP_FORMAT_VERSION,
            header: MapHeader {
                angular_resolution_deg: map.bins.resolution_deg(),
                bins: map.bins.count(),
                sensor_model: *grid.config(),
            },
            map_version: map.version,
            next_id: map.next_id(),
            features: map.features.clone(),
            sensor_model,
            sensor_model_skipped: grid.skipped(),
        }
    }

    /// Rebuilds and validates the map and grid. `path` only labels errors.
    pub fn into_parts(self, path: &Path) -> Result<(PriorMap, SensorModelGrid)> {
        let bins = AngularBins::from_resolution_deg(self.header.angular_resolution_deg)?;
        if bins.count() != self.header.bins {
            return Err(Error::InvalidConfig(format!(
                "{}: header declares {} bins but resolution gives {}",
                path.display(),
                self.header.bins,
                bins.count()
            )));
        }
        let map = PriorMap::from_parts(bins, self.map_version, self.next_id, self.features)?;
        let (pole, corner) = match self.sensor_model {
            GridCells::Decimal { pole, corner } => (pole, corner),
            GridCells::Base64 { pole, corner } => (decode_cells(&pole, path)?, decode_cells(&corner, path)?),
        };
        let mut grid = SensorModelGrid::from_cells(self.header.sensor_model, pole, corner)?;
        grid.set_skipped(self.sensor_model_skipped);
        Ok((map, grid))
    }
}

/// Parses a versioned JSON document, refusing unknown versions before
/// reading anything else.
fn parse_versioned<T: DeserializeOwned>(text: &str, path: &Path, expected: u32) -> Result<T> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
    if probe.format_version != expected {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            found: probe.format_version,
            expected,
        });
    }
    serde_json::from_str(text).map_err(|e| Error::json(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes a text artifact, creating parent directories.
pub fn save_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory types always serialize");
    text.push('\n');
    text
}

pub fn encode_map(map: &PriorMap, grid: &SensorModelGrid, encoding: GridEncoding) -> String {
    to_json(&MapFile::new(map, grid, encoding))
}

pub fn decode_map(text: &str, path: &Path) -> Result<(PriorMap, SensorModelGrid)> {
    parse_versioned::<MapFile>(text, path, MAP_FORMAT_VERSION)?.into_parts(path)
}

pub fn save_map(path: &Path, map: &PriorMap, grid: &SensorModelGrid, encoding: GridEncoding) -> Result<()> {
    save_text(path, &encode_map(map, grid, encoding))
}

pub fn load_map(path: &Path) -> Result<(PriorMap, SensorModelGrid)> {
    decode_map(&read(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    format_version: u32,
    layer: NewFeatureLayer,
}

pub fn encode_layer(layer: &NewFeatureLayer) -> String {
    to_json(&LayerFile {
        format_version: LAYER_FORMAT_VERSION,
        layer: layer.clone(),
    })
}

pub fn save_layer(path: &Path, layer: &NewFeatureLayer) -> Result<()> {
    save_text(path, &encode_layer(layer))
}

pub fn load_layer(path: &Path) -> Result<NewFeatureLayer> {
    Ok(parse_versioned::<LayerFile>(&read(path)?, path, LAYER_FORMAT_VERSION)?.layer)
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    format_version: u32,
    world: WorldTimeline,
}

pub fn save_world(path: &Path, world: &WorldTimeline) -> Result<()> {
    save_text(
        path,
        &to_json(&WorldFile {
            format_version: WORLD_FORMAT_VERSION,
            world: world.clone(),
        }),
    )
}

pub fn load_world(path: &Path) -> Result<WorldTimeline> {
    Ok(parse_versioned::<WorldFile>(&read(path)?, path, WORLD_FORMAT_VERSION)?.world)
}

#[derive(Serialize, Deserialize)]
struct DriveHeader {
    format_version: u32,
    week: u32,
    steps: usize,
}

pub fn write_drive(writer: &mut impl Write, drive: &DriveLog) -> std::io::Result<()> {
    let header = DriveHeader {
        format_version: DRIVE_FORMAT_VERSION,
        week: drive.week,
        steps: drive.steps.len(),
    };
    serde_json::to_writer(&mut *writer, &header)?;
    writer.write_all(b"\n")?;
    for step in &drive.steps {
        serde_json::to_writer(&mut *writer, step)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_drive(path: &Path, drive: &DriveLog) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_drive(&mut out, drive)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a drive log; parse errors report the line of the offending record.
pub fn read_drive(reader: impl BufRead, path: &Path) -> Result<DriveLog> {
    let at_line = |line: usize, e: serde_json::Error| Error::Parse {
        path: path.to_path_buf(),
        line,
        column: e.column(),
        message: e.to_string(),
    };
    let mut lines = reader.lines();
    let first = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: 1,
                message: "empty drive log".into(),
            })
        }
    };
    let probe: VersionProbe = serde_json::from_str(&first).map_err(|e| at_line(1, e))?;
    if probe.format_version != DRIVE_FORMAT_VERSION {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            found: probe.format_version,
            expected: DRIVE_FORMAT_VERSION,
        });
    }
    let header: DriveHeader = serde_json::from_str(&first).map_err(|e| at_line(1, e))?;
    let mut steps = Vec::with_capacity(header.steps);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let step: Timestep = serde_json::from_str(&line).map_err(|e| at_line(i + 2, e))?;
        steps.push(step);
    }
    if steps.len() != header.steps {
        return Err(Error::InvalidDrive(format!(
            "{}: header announces {} steps, found {}",
            path.display(),
            header.steps,
            steps.len()
        )));
    }
    let drive = DriveLog {
        week: header.week,
        steps,
    };
    drive.validate()?;
    Ok(drive)
}

pub fn load_drive(path: &Path) -> Result<DriveLog> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_drive(BufReader::new(file), path)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = e
        .position()
        .map_or((0, 0), |p| (p.line() as usize, 0));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: e.to_string(),
    }
}

/// The report as CSV, one row per week.
pub fn encode_report_csv(report: &RunReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &report.rows {
        writer.serialize(row).expect("rows always serialize");
    }
    if report.rows.is_empty() {
        writer
            .write_record(WeekRow::COLUMNS)
            .expect("header always serializes");
    }
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

pub fn decode_report_csv(text: &str, path: &Path) -> Result<Vec<WeekRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().ne(WeekRow::COLUMNS) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("expected columns {}", WeekRow::COLUMNS.join(",")),
        });
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn save_report(dir: &Path, report: &RunReport) -> Result<()> {
    save_text(&dir.join("report.csv"), &encode_report_csv(report))?;
    save_text(&dir.join("report.json"), &to_json(report))
}

pub fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join("report.json");
    serde_json::from_str(&read(&path)?).map_err(|e| Error::json(&path, e))
}

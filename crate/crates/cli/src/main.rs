use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mapkeep::campaign::{initial_map, run_campaign_with, step_week, RunReport};
use mapkeep::config::Scenario;
use mapkeep::geometry::Point2;
use mapkeep::io;
use mapkeep::map::PriorMap;
use mapkeep::pipeline::MapState;
use mapkeep::render::render_svg;
use mapkeep::sensor_model::SensorModelGrid;
use mapkeep::sim::{generate_drive, generate_world, WorldTimeline};

#[derive(Parser)]
#[command(name = "mapkeep", version, about = "Simulate and maintain a 2D feature map over weekly drives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// World generation.
    World {
        #[command(subcommand)]
        action: WorldAction,
    },
    /// Simulate one drive per week and write the logs.
    Drive(Common),
    /// Run the pipeline over the drive logs in the output directory.
    Maintain(Common),
    /// World, drives and maintenance in one pass, without writing drive logs.
    Campaign(Common),
    /// Print the report of a run as CSV and check its accounting.
    Report(Common),
    /// Draw every stored map as SVG.
    Render(Common),
}

#[derive(Subcommand)]
enum WorldAction {
    /// Generate the world timeline.
    Gen(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    weeks: Option<u32>,
    /// Run maintenance after every n-th drive.
    #[arg(long)]
    cadence: Option<u32>,
    /// Also write SVG renders of the weekly maps.
    #[arg(long)]
    render: bool,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        // Without --scenario, a run directory's own scenario takes precedence
        // over the defaults so later stages match earlier ones.
        let stored = Layout(&self.out).scenario();
        let mut s = match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None if stored.exists() => Scenario::load(&stored)?,
            None => Scenario::default(),
        };
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(weeks) = self.weeks {
            s.weeks = weeks;
        }
        if let Some(cadence) = self.cadence {
            s.cadence = cadence;
        }
        s.validate()?;
        Ok(s)
    }
}

struct Layout<'a>(&'a Path);

impl Layout<'_> {
    fn scenario(&self) -> PathBuf {
        self.0.join("scenario.toml")
    }
    fn world(&self) -> PathBuf {
        self.0.join("world.json")
    }
    fn drive(&self, week: u32) -> PathBuf {
        self.0.join("drives").join(format!("week_{week:03}.jsonl"))
    }
    fn initial_map(&self) -> PathBuf {
        self.0.join("maps").join("initial.json")
    }
    fn map(&self, week: u32) -> PathBuf {
        self.0.join("maps").join(format!("week_{week:03}.json"))
    }
    fn layer(&self, week: u32) -> PathBuf {
        self.0.join("layers").join(format!("week_{week:03}.json"))
    }
    fn render(&self, week: u32) -> PathBuf {
        self.0.join("render").join(format!("week_{week:03}.svg"))
    }
}

fn write_scenario(out: &Path, scenario: &Scenario) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = Layout(out).scenario();
    fs::write(&path, scenario.to_toml()).with_context(|| format!("writing {}", path.display()))
}

fn save_world(out: &Path, scenario: &Scenario) -> Result<WorldTimeline> {
    let world = generate_world(&scenario.world, scenario.seed, scenario.weeks)?;
    io::save_world(&Layout(out).world(), &world)?;
    Ok(world)
}

fn centre_line(world: &WorldTimeline) -> Vec<Point2> {
    let length = world.route.length();
    let n = (length / 5.0).ceil() as usize;
    (0..=n).map(|i| world.route.point_at(i as f64 * length / n as f64, 0.0)).collect()
}

fn world_gen(c: &Common) -> Result<()> {
    let scenario = c.scenario()?;
    write_scenario(&c.out, &scenario)?;
    let world = save_world(&c.out, &scenario)?;
    println!(
        "{} features over {} weeks, route {:.1} m",
        world.features.len(),
        world.weeks,
        world.route.length()
    );
    Ok(())
}

fn drive(c: &Common) -> Result<()> {
    let scenario = c.scenario()?;
    write_scenario(&c.out, &scenario)?;
    let world = save_world(&c.out, &scenario)?;
    for week in 0..scenario.weeks {
        let log = generate_drive(&world, week, &scenario.drive, &scenario.detector);
        io::save_drive(&Layout(&c.out).drive(week), &log)?;
        println!("week {week}: {} timesteps", log.steps.len());
    }
    Ok(())
}

fn maintain(c: &Common) -> Result<()> {
    let scenario = c.scenario()?;
    let layout = Layout(&c.out);
    let world = io::load_world(&layout.world()).context("maintain needs a world; run `world gen` first")?;
    let initial = initial_map(&world, &scenario)?;
    let mut state = MapState::new(initial.clone(), &scenario.maintenance)?;
    io::save_map(&layout.initial_map(), &initial, &state.sensor_model, scenario.output.grid_encoding)?;
    let mut report = RunReport {
        initial_features: initial.len(),
        rows: Vec::new(),
    };
    for week in 0..scenario.weeks {
        let path = layout.drive(week);
        if !path.exists() {
            bail!("missing drive log {}; run `drive` first", path.display());
        }
        let log = io::load_drive(&path)?;
        if log.week != week {
            bail!("{} holds week {}, expected {week}", path.display(), log.week);
        }
        let record = step_week(&mut state, &log, &world.drivable, &scenario)?;
        emit_week(&layout, &scenario, &state, record.row.week)?;
        if c.render {
            let path: Vec<Point2> = log.true_path().iter().map(|p| p.position()).collect();
            write_render(&layout, &state.map, week, &world, &path)?;
        }
        report.rows.push(record.row);
    }
    finish_report(&c.out, &report)
}

fn emit_week(layout: &Layout, scenario: &Scenario, state: &MapState, week: u32) -> mapkeep::Result<()> {
    io::save_map(&layout.map(week), &state.map, &state.sensor_model, scenario.output.grid_encoding)?;
    io::save_layer(&layout.layer(week), &state.layer)?;
    Ok(())
}

fn write_render(layout: &Layout, map: &PriorMap, week: u32, world: &WorldTimeline, path: &[Point2]) -> mapkeep::Result<()> {
    io::save_text(&layout.render(week), &render_svg(map, week, Some(world), path))
}

fn finish_report(out: &Path, report: &RunReport) -> Result<()> {
    io::save_report(out, report)?;
    print!("{}", io::encode_report_csv(report));
    let bad = report.accounting_violations();
    if !bad.is_empty() {
        bail!("accounting identity violated in weeks {bad:?}");
    }
    Ok(())
}

fn campaign(c: &Common) -> Result<()> {
    let scenario = c.scenario()?;
    write_scenario(&c.out, &scenario)?;
    let layout = Layout(&c.out);
    let world = save_world(&c.out, &scenario)?;
    let result = run_campaign_with(&scenario, |record, state, log| {
        emit_week(&layout, &scenario, state, record.row.week)?;
        if c.render {
            let path: Vec<Point2> = log.true_path().iter().map(|p| p.position()).collect();
            write_render(&layout, &state.map, record.row.week, &world, &path)?;
        }
        Ok(())
    })?;
    let initial_grid = SensorModelGrid::new(scenario.maintenance.sensor_model)?;
    io::save_map(&layout.initial_map(), &result.initial_map, &initial_grid, scenario.output.grid_encoding)?;
    finish_report(&c.out, &result.report)
}

fn report(c: &Common) -> Result<()> {
    let report = io::load_report(&c.out)?;
    print!("{}", io::encode_report_csv(&report));
    let bad = report.accounting_violations();
    if !bad.is_empty() {
        bail!("accounting identity violated in weeks {bad:?}");
    }
    Ok(())
}

fn render(c: &Common) -> Result<()> {
    let layout = Layout(&c.out);
    let world = io::load_world(&layout.world()).context("render needs a world; run `world gen` first")?;
    let weeks = c.weeks.unwrap_or(world.weeks);
    let mut drawn = 0;
    for week in 0..weeks {
        let map_path = layout.map(week);
        if !map_path.exists() {
            continue;
        }
        let (map, _) = io::load_map(&map_path)?;
        let drive_path = layout.drive(week);
        let path = if drive_path.exists() {
            io::load_drive(&drive_path)?.true_path().iter().map(|p| p.position()).collect()
        } else {
            centre_line(&world)
        };
        write_render(&layout, &map, week, &world, &path)?;
        drawn += 1;
    }
    if drawn == 0 {
        bail!("no maps under {}", c.out.join("maps").display());
    }
    println!("rendered {drawn} maps");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::World {
            action: WorldAction::Gen(c),
        } => world_gen(&c),
        Command::Drive(c) => drive(&c),
        Command::Maintain(c) => maintain(&c),
        Command::Campaign(c) => campaign(&c),
        Command::Report(c) => report(&c),
        Command::Render(c) => render(&c),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `lmpath`: plan a likelihood-ordered search mission over map imagery.

mod commands;
mod config;
mod plot;

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lmpath_core::prior::protocol::serve_stub;
use lmpath_core::prior::StaticLabelMap;
use lmpath_core::{Category, Error, Result};

use config::{ConfigFile, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "lmpath", version, about = "Search paths ordered by a map-derived likelihood prior")]
struct Cli {
    /// `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    cmd: Command,
}

/// Flags shared by every subcommand; each overrides the same config key.
#[derive(Args, Default)]
struct Options {
    /// Tile URL template with {z}, {x}, {y} (env TILE_URL).
    #[arg(long, global = true)]
    tile_url: Option<String>,
    /// API token appended to tile requests (env TILE_TOKEN).
    #[arg(long, global = true)]
    tile_token: Option<String>,
    /// Cache namespace for the tile source.
    #[arg(long, global = true)]
    tile_source: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    tile_cache: Option<PathBuf>,
    /// Never touch the network; missing tiles are an error.
    #[arg(long, global = true)]
    offline: bool,
    /// Target imagery resolution in m/px, used to pick the zoom.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// Explicit zoom level, overriding --resolution.
    #[arg(long, global = true)]
    zoom: Option<u8>,
    #[arg(long, global = true)]
    window_px: Option<usize>,
    /// Fractional window overlap in [0, 1).
    #[arg(long, global = true)]
    overlap: Option<f64>,
    /// Heatmap normalization: domain or image.
    #[arg(long, global = true)]
    normalize: Option<String>,
    /// Camera footprint width on the ground, m.
    #[arg(long, global = true)]
    footprint: Option<f64>,
    #[arg(long, global = true)]
    lateral_overlap: Option<f64>,
    /// Detection radius, m (default: half the footprint).
    #[arg(long, global = true)]
    detection_radius: Option<f64>,
    /// Planner: min-latency, threshold or baseline.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Density threshold for threshold mode, 1/m².
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Largest instance solved exactly.
    #[arg(long, global = true)]
    exact_limit: Option<usize>,
    /// Segmentation backend: synthetic or external.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Adapter command for the external backend (env LMPATH_BACKEND_CMD).
    #[arg(long, global = true)]
    backend_cmd: Option<String>,
    /// Scenario JSON: labelled regions and ground-truth targets.
    #[arg(long, global = true, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Target to label map file.
    #[arg(long, global = true, value_name = "FILE")]
    labels_map: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the likelihood heatmap for a plan.
    Heatmap {
        plan: PathBuf,
        #[arg(long, default_value = "car")]
        target: String,
    },
    /// Build the heatmap, place waypoints, solve and write the mission.
    Plan {
        plan: PathBuf,
        #[arg(long, default_value = "car")]
        target: String,
    },
    /// Monte Carlo comparison of the min-latency and baseline tours.
    Evaluate {
        plan: PathBuf,
        #[arg(long, default_value = "car")]
        target: String,
    },
    /// Tile cache maintenance.
    Tiles {
        #[command(subcommand)]
        cmd: TilesCommand,
    },
    /// Show the label set a target expands to.
    Labels { target: String },
    /// Serve the stub segmentation protocol on stdin/stdout.
    #[command(hide = true)]
    BackendStub,
}

#[derive(Subcommand)]
enum TilesCommand {
    /// Fill the cache for a plan's geofence.
    Fetch { plan: PathBuf },
}

impl Options {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                o.insert(k, v);
            }
        };
        let s = |v: &Option<f64>| v.map(|x| x.to_string());
        let p = |v: &Option<PathBuf>| v.as_ref().map(|x| x.display().to_string());
        put("tile_url", self.tile_url.clone());
        put("tile_token", self.tile_token.clone());
        put("tile_source", self.tile_source.clone());
        put("tile_cache", p(&self.tile_cache));
        put("offline", self.offline.then(|| "true".into()));
        put("resolution", s(&self.resolution));
        put("zoom", self.zoom.map(|x| x.to_string()));
        put("window_px", self.window_px.map(|x| x.to_string()));
        put("overlap", s(&self.overlap));
        put("normalize", self.normalize.clone());
        put("footprint", s(&self.footprint));
        put("lateral_overlap", s(&self.lateral_overlap));
        put("detection_radius", s(&self.detection_radius));
        put("mode", self.mode.clone());
        put("rho", s(&self.rho));
        put("exact_limit", self.exact_limit.map(|x| x.to_string()));
        put("backend", self.backend.clone());
        put("backend_cmd", self.backend_cmd.clone());
        put("scenario", p(&self.scenario));
        put("labels_map", p(&self.labels_map));
        put("workers", self.workers.map(|x| x.to_string()));
        put("out", p(&self.out));
        put("seed", self.seed.map(|x| x.to_string()));
        put("trials", self.trials.map(|x| x.to_string()));
        o
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    RunConfig::resolve(&file, &|k| std::env::var(k).ok(), &cli.opts.overrides())
}

fn run(cli: Cli) -> Result<()> {
    if let Command::BackendStub = cli.cmd {
        let map = match &cli.opts.labels_map {
            Some(p) => StaticLabelMap::load(p)?,
            None => StaticLabelMap::bundled(),
        };
        return serve_stub(io::stdin().lock(), io::stdout().lock(), &map).map_err(|e| Error::Backend(e.to_string()));
    }
    let cfg = resolve(&cli)?;
    match &cli.cmd {
        Command::Heatmap { plan, target } => commands::heatmap(&cfg, plan, target),
        Command::Plan { plan, target } => commands::plan(&cfg, plan, target),
        Command::Evaluate { plan, target } => commands::evaluate(&cfg, plan, target).map(|_| ()),
        Command::Tiles { cmd: TilesCommand::Fetch { plan } } => commands::tiles_fetch(&cfg, plan),
        Command::Labels { target } => {
            let set = commands::expand_labels(&cfg, target)?;
            for l in &set.labels {
                println!("{l}");
            }
            Ok(())
        }
        Command::BackendStub => unreachable!(),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        Category::Input => 2,
        Category::Network => 3,
        Category::Backend => 4,
        Category::Infeasible => 5,
        Category::Internal => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lmpath: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

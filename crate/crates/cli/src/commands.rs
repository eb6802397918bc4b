//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

use lmpath_core::geoplan::{parse_plan, write_mission, GeoPlan, PlanDefaults};
use lmpath_core::pipeline::{self, build_prior, plan_mission, Mission, PlanSettings, Prior, PriorSettings, Scene};
use lmpath_core::planner::{self, expected_time, Mode};
use lmpath_core::prior::contour::{contours_geojson, DEFAULT_LEVELS};
use lmpath_core::prior::protocol::ProcessBackend;
use lmpath_core::prior::segment::Segmenter;
use lmpath_core::prior::{LabelBackend, LabelExpander, LabelSet, StaticLabelMap, SyntheticSegmenter};
use lmpath_core::simeval::{compare, Sampling, Scenario, Summary};
use lmpath_core::tiles::{self, HttpTransport, TileFetcher, TileRange, TileSource};
use lmpath_core::{geojson, Error, Result};

use crate::config::{BackendKind, RunConfig};
use crate::plot;

/// Template used when running offline without a configured URL; never fetched.
const OFFLINE_TEMPLATE: &str = "offline://{z}/{x}/{y}";

pub fn load_plan(path: &Path) -> Result<GeoPlan> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_plan(&bytes, &PlanDefaults::default())
}

fn fetcher(cfg: &RunConfig) -> Result<TileFetcher> {
    let template = match (&cfg.tile_url, cfg.offline) {
        (Some(url), _) => url.clone(),
        (None, true) => OFFLINE_TEMPLATE.to_string(),
        (None, false) => {
            return Err(Error::InvalidParameter(
                "no tile URL configured: set TILE_URL, tile_url or use --offline with a filled cache".into(),
            ))
        }
    };
    let source = TileSource::new(cfg.tile_source.clone(), template)?.with_token(cfg.tile_token.clone());
    Ok(TileFetcher::new(source, &cfg.tile_cache, Arc::new(HttpTransport::default())).offline(cfg.offline))
}

fn tile_range(cfg: &RunConfig, plan: &GeoPlan) -> Result<TileRange> {
    match cfg.zoom {
        Some(z) => {
            let (lo, hi) = plan.geofence.bounds();
            TileRange::covering(lo, hi, z)
        }
        None => pipeline::tile_range(plan, cfg.resolution),
    }
}

fn scene(cfg: &RunConfig, plan: GeoPlan) -> Result<Scene> {
    let f = fetcher(cfg)?;
    let range = tile_range(cfg, &plan)?;
    let mosaic = tiles::compose(&f.fetch(&range)?, range.z)?;
    log::info!("mosaic {}x{} px at zoom {}", mosaic.width, mosaic.height, mosaic.zoom);
    Scene::new(plan, &mosaic)
}

fn backend_cmd(cfg: &RunConfig) -> Result<&str> {
    cfg.backend_cmd
        .as_deref()
        .ok_or_else(|| Error::InvalidParameter("external backend needs LMPATH_BACKEND_CMD or backend_cmd".into()))
}

fn expander(cfg: &RunConfig) -> Result<LabelExpander> {
    let map = match &cfg.labels_map {
        Some(p) => StaticLabelMap::load(p)?,
        None => StaticLabelMap::bundled(),
    };
    let external: Option<Box<dyn LabelBackend>> = match (cfg.backend, &cfg.backend_cmd) {
        (BackendKind::External, Some(cmd)) => Some(Box::new(ProcessBackend::spawn(cmd)?)),
        _ => None,
    };
    Ok(LabelExpander::new(Some(map), external))
}

pub fn expand_labels(cfg: &RunConfig, target: &str) -> Result<LabelSet> {
    expander(cfg)?.expand(target)
}

fn load_scenario(cfg: &RunConfig) -> Result<Scenario> {
    let path = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("a scenario file is required (--scenario or scenario =)".into()))?;
    let mut s = Scenario::load(path)?;
    if let Some(seed) = cfg.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn prior(cfg: &RunConfig, scene: &Scene, labels: &LabelSet) -> Result<Prior> {
    let settings = PriorSettings {
        window_px: cfg.window_px,
        overlap: cfg.overlap,
        normalize: cfg.normalize,
        workers: cfg.workers.max(1),
    };
    let image = scene.mosaic.to_image();
    match cfg.backend {
        BackendKind::Synthetic => {
            let rings = load_scenario(cfg)?.region_rings();
            let grid = Arc::new(scene.domain.grid.clone());
            let factory = || -> Result<Box<dyn Segmenter>> { Ok(Box::new(SyntheticSegmenter::new(grid.clone(), &rings))) };
            build_prior(&image, &scene.domain, labels, &factory, &settings)
        }
        BackendKind::External => {
            let cmd = backend_cmd(cfg)?.to_string();
            let factory = move || -> Result<Box<dyn Segmenter>> { Ok(Box::new(ProcessBackend::spawn(&cmd)?)) };
            build_prior(&image, &scene.domain, labels, &factory, &settings)
        }
    }
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
}

fn write_json(path: PathBuf, v: &Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

fn heat_artifacts(dir: &Path, scene: &Scene, prior: &Prior) -> Result<()> {
    prior.heat.save_png(&dir.join("heatmap.png"), Some(&scene.mosaic.geo_transform))?;
    write(dir.join("heatmap.pgw"), scene.mosaic.geo_transform.world_file().as_bytes())?;
    scene.mosaic.save_png(&dir.join("imagery.png"))?;
    let mosaic = &scene.mosaic;
    let to_lonlat = |c: f64, r: f64| {
        let g = mosaic.pixel_to_geo(c, r);
        [g.lon, g.lat]
    };
    write_json(dir.join("contours.geojson"), &contours_geojson(&prior.heat, &DEFAULT_LEVELS, &to_lonlat))
}

pub fn heatmap(cfg: &RunConfig, plan_file: &Path, target: &str) -> Result<()> {
    let plan = load_plan(plan_file)?;
    let labels = expand_labels(cfg, target)?;
    println!("labels: {}", labels.labels.join(", "));
    let scene = scene(cfg, plan)?;
    let prior = prior(cfg, &scene, &labels)?;
    let dir = out_dir(cfg)?;
    heat_artifacts(dir, &scene, &prior)?;
    println!(
        "heatmap {}x{} px, {} windows, max density {:.3e} /m², written to {}",
        prior.heat.width,
        prior.heat.height,
        prior.windows.len(),
        prior.heat.max(),
        dir.display()
    );
    Ok(())
}

fn pixel(scene: &Scene, p: lmpath_core::Vec2) -> (f64, f64) {
    scene.mosaic.geo_to_pixel(scene.frame.to_geo(p))
}

fn mission_artifacts(dir: &Path, scene: &Scene, prior: &Prior, m: &Mission, labels: &LabelSet) -> Result<()> {
    let inst = &m.instance;
    let path: Vec<_> = m.plan.order.iter().map(|&i| scene.frame.to_geo(inst.points[i])).collect();
    write(dir.join("mission.plan"), &write_mission(&scene.plan, &path, true)?)?;
    write_json(dir.join("path.geojson"), &geojson::path(&m.plan, inst, &scene.frame, true))?;
    write_json(dir.join("waypoints.geojson"), &geojson::waypoints(&m.waypoints, &scene.frame))?;
    let et = expected_time(&m.plan, &inst.masses);
    let report = json!({
        "target": labels.target,
        "labels": labels.labels,
        "waypoints": inst.len(),
        "plan": m.plan,
        "expected_time": et,
        "solver": m.report,
    });
    write_json(dir.join("report.json"), &report)?;

    let mut path_px = vec![pixel(scene, inst.base)];
    path_px.extend(m.plan.order.iter().map(|&i| pixel(scene, inst.points[i])));
    let wp_px: Vec<_> = inst.points.iter().map(|&p| pixel(scene, p)).collect();
    let img = plot::mission_plot(&scene.mosaic.to_image(), &prior.heat, &path_px, &wp_px);
    let p = dir.join("plot.png");
    img.save(&p)?;
    Ok(())
}

pub fn plan(cfg: &RunConfig, plan_file: &Path, target: &str) -> Result<()> {
    let plan = load_plan(plan_file)?;
    let labels = expand_labels(cfg, target)?;
    let scene = scene(cfg, plan)?;
    let prior = prior(cfg, &scene, &labels)?;
    let settings = PlanSettings { sensor: cfg.sensor, mode: cfg.mode, rho: cfg.rho, exact_limit: cfg.exact_limit };
    let m = plan_mission(&scene.domain, &prior.heat, scene.home()?, scene.plan.cruise_speed, &settings)?;
    let dir = out_dir(cfg)?;
    heat_artifacts(dir, &scene, &prior)?;
    mission_artifacts(dir, &scene, &prior, &m, &labels)?;
    let et = expected_time(&m.plan, &m.instance.masses);
    println!("labels: {}", labels.labels.join(", "));
    println!(
        "{}: {} of {} waypoints, path {:.0} m (+{:.0} m return), expected time {:.1} s, {}",
        m.plan.mode.as_str(),
        m.plan.order.len(),
        m.instance.len(),
        m.plan.path_length,
        m.plan.return_length,
        et.normalized,
        if m.plan.is_proven_optimal() { "optimal".to_string() } else { format!("heuristic, gap {:.3e}", m.report.bound_gap) }
    );
    println!("mission written to {}", dir.join("mission.plan").display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, plan_file: &Path, target: &str) -> Result<Summary> {
    let plan = load_plan(plan_file)?;
    let scenario = load_scenario(cfg)?;
    let frame = plan.local_frame()?;
    scenario.validate(&plan.geofence.to_local(&frame)?)?;
    let labels = expand_labels(cfg, target)?;
    let scene = scene(cfg, plan)?;
    let prior = prior(cfg, &scene, &labels)?;
    let settings = PlanSettings {
        sensor: cfg.sensor,
        mode: Mode::MinExpectedTime,
        rho: cfg.rho,
        exact_limit: cfg.exact_limit,
    };
    let lm = plan_mission(&scene.domain, &prior.heat, scene.home()?, scene.plan.cruise_speed, &settings)?;
    let (baseline, _) = planner::solve_baseline_tsp(&lm.instance, cfg.exact_limit)?;
    let plans = [("lmpath".to_string(), lm.plan.clone()), ("baseline".to_string(), baseline)];
    let summary = compare(&plans, &lm.instance, &scenario, cfg.trials, cfg.sensor.detection_radius, &Sampling::Uniform)?;
    let dir = out_dir(cfg)?;
    write(dir.join("summary.json"), &summary.to_json()?)?;
    let table = summary.to_table();
    write(dir.join("summary.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(summary)
}

pub fn tiles_fetch(cfg: &RunConfig, plan_file: &Path) -> Result<()> {
    let plan = load_plan(plan_file)?;
    let f = fetcher(cfg)?;
    let range = tile_range(cfg, &plan)?;
    let got = f.fetch(&range)?;
    println!(
        "{} tiles at zoom {} in {} ({} network requests)",
        got.len(),
        range.z,
        cfg.tile_cache.join(&cfg.tile_source).display(),
        f.request_count()
    );
    Ok(())
}

//! End-to-end stages shared by the command line and the test suites:
//! imagery → prior → waypoints → plan.

use image::RgbImage;

use crate::error::Result;
use crate::geom::Vec2;
use crate::geoplan::{GeoPlan, LocalFrame};
use crate::planner::{self, Instance, Mode, PathPlan, SolveReport, DEFAULT_EXACT_LIMIT};
use crate::prior::segment::SegmenterFactory;
use crate::prior::{
    aggregate_label, build_heatmap, segment_windows, HeatMap, LabelMask, LabelSet, NormalizeOver, WindowGrid,
    DEFAULT_OVERLAP, DEFAULT_WINDOW_PX,
};
use crate::raster::{Domain, RasterGrid};
use crate::tiles::{self, TileFetcher, TileMosaic, TileRange};
use crate::waypoints::{SensorModel, WaypointSet};

/// Georeferenced imagery clipped to the geofence, with its local-frame
/// raster and flyable domain.
pub struct Scene {
    pub plan: GeoPlan,
    pub frame: LocalFrame,
    pub mosaic: TileMosaic,
    pub domain: Domain,
}

impl Scene {
    pub fn new(plan: GeoPlan, mosaic: &TileMosaic) -> Result<Self> {
        plan.validate()?;
        let frame = plan.local_frame()?;
        let (lo, hi) = plan.geofence.bounds();
        let mosaic = mosaic.clip(lo, hi);
        let grid = RasterGrid::from_mosaic(&mosaic, &frame);
        let domain = Domain::from_plan(&plan, &frame, grid)?;
        Ok(Scene { plan, frame, mosaic, domain })
    }

    /// Zoom for `resolution` m/px at the fence centroid, the covering tile
    /// range, fetched and stitched.
    pub fn fetch(plan: GeoPlan, fetcher: &TileFetcher, resolution: f64) -> Result<Self> {
        let mosaic = fetch_mosaic(&plan, fetcher, resolution)?;
        Scene::new(plan, &mosaic)
    }

    pub fn home(&self) -> Result<Vec2> {
        self.frame.to_local(self.plan.home)
    }
}

pub fn tile_range(plan: &GeoPlan, resolution: f64) -> Result<TileRange> {
    let (lo, hi) = plan.geofence.bounds();
    let z = tiles::select_zoom(plan.geofence.centroid().lat, resolution)?;
    TileRange::covering(lo, hi, z)
}

pub fn fetch_mosaic(plan: &GeoPlan, fetcher: &TileFetcher, resolution: f64) -> Result<TileMosaic> {
    let range = tile_range(plan, resolution)?;
    let tiles = fetcher.fetch(&range)?;
    tiles::compose(&tiles, range.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSettings {
    pub window_px: usize,
    pub overlap: f64,
    pub normalize: NormalizeOver,
    /// Parallel backend connections.
    pub workers: usize,
}

impl Default for PriorSettings {
    fn default() -> Self {
        PriorSettings {
            window_px: DEFAULT_WINDOW_PX,
            overlap: DEFAULT_OVERLAP,
            normalize: NormalizeOver::Domain,
            workers: 4,
        }
    }
}

pub struct Prior {
    pub labels: LabelSet,
    pub windows: WindowGrid,
    pub label_masks: Vec<LabelMask>,
    pub heat: HeatMap,
}

pub fn build_prior(
    image: &RgbImage,
    domain: &Domain,
    labels: &LabelSet,
    factory: &SegmenterFactory<'_>,
    settings: &PriorSettings,
) -> Result<Prior> {
    let windows = WindowGrid::new(
        image.width() as usize,
        image.height() as usize,
        settings.window_px,
        settings.overlap,
    )?;
    let masks = segment_windows(image, &windows, labels, factory, settings.workers)?;
    let label_masks = labels
        .labels
        .iter()
        .enumerate()
        .map(|(l, name)| {
            let mine: Vec<_> = masks.iter().filter(|m| m.label == l).collect();
            aggregate_label(name, &mine, &windows)
        })
        .collect::<Result<Vec<_>>>()?;
    let heat = build_heatmap(&label_masks, domain, settings.normalize)?;
    Ok(Prior { labels: labels.clone(), windows, label_masks, heat })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanSettings {
    pub sensor: SensorModel,
    pub mode: Mode,
    /// Density threshold, read in threshold mode only.
    pub rho: f64,
    pub exact_limit: usize,
}

impl PlanSettings {
    pub fn new(sensor: SensorModel, mode: Mode) -> Self {
        PlanSettings { sensor, mode, rho: 0.0, exact_limit: DEFAULT_EXACT_LIMIT }
    }
}

pub struct Mission {
    pub waypoints: WaypointSet,
    pub instance: Instance,
    pub plan: PathPlan,
    pub report: SolveReport,
}

pub fn plan_mission(domain: &Domain, heat: &HeatMap, base: Vec2, speed: f64, s: &PlanSettings) -> Result<Mission> {
    let waypoints = WaypointSet::build(domain, heat, &s.sensor, base)?;
    let instance = Instance::from_waypoints(&waypoints, speed)?;
    let (plan, report) = planner::solve(&instance, s.mode, s.rho, s.exact_limit)?;
    Ok(Mission { waypoints, instance, plan, report })
}

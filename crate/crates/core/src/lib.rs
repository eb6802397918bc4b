//! Semantic search-path planning for UAV missions: map tiles to a heatmap
//! prior, the prior to waypoint masses, and masses to a visiting order that
//! minimizes expected detection time.

pub mod error;
pub mod geom;
pub mod geojson;
pub mod geoplan;
pub mod pipeline;
pub mod planner;
pub mod prior;
pub mod raster;
pub mod simeval;
pub mod synthetic;
pub mod tiles;
pub mod waypoints;

pub use error::{Category, Error, Result};
pub use geom::Vec2;
pub use geoplan::{parse_plan, write_mission, GeoPlan, GeoPoint, GeoPolygon, LocalFrame, PlanDefaults};
pub use planner::{
    expected_time, solve, solve_baseline_tsp, solve_min_latency, solve_threshold_tsp, Instance, Mode, Optimality,
    PathPlan, SolveReport,
};
pub use prior::{build_heatmap, HeatMap, LabelMask, NormalizeOver, WindowGrid};
pub use raster::{Domain, RasterGrid};
pub use simeval::{compare, run_trial, Scenario, Summary};
pub use tiles::{TileCoord, TileFetcher, TileMosaic, TileRange, TileSource};
pub use waypoints::{SensorModel, WaypointSet};

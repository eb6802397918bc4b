//! Synthetic parking-lot scene for offline runs and tests: a square fence,
//! one labelled lot, thin roads, seeded targets and rendered map tiles.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::geoplan::{parse_plan, GeoPlan, GeoPoint, LocalFrame, PlanDefaults};
use crate::simeval::{Region, Scenario};
use crate::tiles::{self, from_mercator, TileCoord, TileRange, TILE_SIZE};
use crate::waypoints::SensorModel;

pub const ORIGIN: GeoPoint = GeoPoint { lat: 39.95, lon: -75.19 };
pub const HALF_SIDE: f64 = 100.0;
pub const LOT: [Vec2; 2] = [Vec2::new(21.0, 21.0), Vec2::new(99.0, 99.0)];
pub const HOME: Vec2 = Vec2::new(-95.0, -55.0);
pub const LOT_TARGETS: usize = 40;
pub const FIELD_TARGETS: usize = 10;
pub const FOOTPRINT: f64 = 40.0;
pub const LATERAL_OVERLAP: f64 = 0.5;
/// Imagery resolution target, m/px.
pub const RESOLUTION: f64 = 1.0;
pub const WINDOW_PX: usize = 128;
pub const SOURCE_ID: &str = "fixture";

fn rect(lo: Vec2, hi: Vec2) -> Vec<Vec2> {
    vec![lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)]
}

pub fn in_lot(p: Vec2) -> bool {
    geom::ring_contains(&rect(LOT[0], LOT[1]), p)
}

pub fn sensor() -> SensorModel {
    SensorModel::new(FOOTPRINT, LATERAL_OVERLAP).expect("fixture sensor is valid")
}

pub struct ParkingLot {
    pub plan: GeoPlan,
    /// QGC plan text for `plan`.
    pub plan_json: Vec<u8>,
    pub scenario: Scenario,
}

fn regions() -> Vec<Region> {
    let ring = |lo: Vec2, hi: Vec2| rect(lo, hi).iter().map(|v| [v.x, v.y]).collect();
    vec![
        Region { label: "parking lot".into(), polygon: ring(LOT[0], LOT[1]) },
        Region { label: "road".into(), polygon: ring(Vec2::new(30.0, -71.5), Vec2::new(100.0, -68.5)) },
        Region { label: "road".into(), polygon: ring(Vec2::new(-71.5, 30.0), Vec2::new(-68.5, 100.0)) },
    ]
}

/// Lot targets are uniform over the lot; field targets uniform over the rest
/// of the fence, 2 m clear of its edge.
fn targets(seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(LOT_TARGETS + FIELD_TARGETS);
    while out.len() < LOT_TARGETS {
        let p = Vec2::new(rng.gen_range(LOT[0].x..LOT[1].x), rng.gen_range(LOT[0].y..LOT[1].y));
        out.push([p.x, p.y]);
    }
    let m = HALF_SIDE - 2.0;
    while out.len() < LOT_TARGETS + FIELD_TARGETS {
        let p = Vec2::new(rng.gen_range(-m..m), rng.gen_range(-m..m));
        if !in_lot(p) {
            out.push([p.x, p.y]);
        }
    }
    out
}

pub fn parking_lot(seed: u64) -> ParkingLot {
    let frame = LocalFrame::new(ORIGIN).expect("origin in band");
    let h = HALF_SIDE;
    let fence: Vec<[f64; 2]> = rect(Vec2::new(-h, -h), Vec2::new(h, h))
        .into_iter()
        .map(|v| {
            let g = frame.to_geo(v);
            [g.lat, g.lon]
        })
        .collect();
    let home = frame.to_geo(HOME);
    let doc = json!({
        "fileType": "Plan",
        "geoFence": { "circles": [], "polygons": [{ "inclusion": true, "polygon": fence, "version": 1 }], "version": 2 },
        "groundStation": "QGroundControl",
        "mission": {
            "cruiseSpeed": 5.0,
            "items": [],
            "plannedHomePosition": [home.lat, home.lon, 0.0],
            "version": 2,
        },
        "rallyPoints": { "points": [], "version": 2 },
        "version": 1,
    });
    let plan_json = serde_json::to_vec_pretty(&doc).expect("json");
    let plan = parse_plan(&plan_json, &PlanDefaults::default()).expect("fixture plan parses");
    ParkingLot { plan, plan_json, scenario: Scenario { regions: regions(), targets: targets(seed), seed } }
}

const GRASS: Rgb<u8> = Rgb([86, 125, 70]);
const ASPHALT: Rgb<u8> = Rgb([92, 92, 96]);
const ROAD: Rgb<u8> = Rgb([60, 60, 60]);

/// PNG bytes for one tile, painting scenario regions over grass.
pub fn render_tile(t: TileCoord, frame: &LocalFrame, scenario: &Scenario) -> Result<Vec<u8>> {
    let rings = scenario.region_rings();
    let span = 2.0 * tiles::MERCATOR_HALF_WORLD / (1u64 << t.z) as f64;
    let res = span / TILE_SIZE as f64;
    let left = -tiles::MERCATOR_HALF_WORLD + t.x as f64 * span;
    let top = tiles::MERCATOR_HALF_WORLD - t.y as f64 * span;
    let mut img = RgbImage::from_pixel(TILE_SIZE, TILE_SIZE, GRASS);
    for (px, py, pixel) in img.enumerate_pixels_mut() {
        let g = from_mercator(left + (px as f64 + 0.5) * res, top - (py as f64 + 0.5) * res);
        let p = match frame.to_local(g) {
            Ok(p) => p,
            Err(_) => continue,
        };
        for (label, ring) in &rings {
            if geom::ring_contains(ring, p) {
                *pixel = if label == "road" { ROAD } else { ASPHALT };
            }
        }
    }
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
    Ok(out)
}

/// Writes every tile of `range` into `cache_dir` using the fetcher's cache
/// layout under `source_id`.
pub fn write_tile_cache(
    cache_dir: &Path,
    source_id: &str,
    range: &TileRange,
    frame: &LocalFrame,
    scenario: &Scenario,
) -> Result<()> {
    for t in range.tiles() {
        let path = tiles::cache_path(cache_dir, source_id, t);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = render_tile(t, frame, scenario)?;
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Config pointing the CLI at a bundle written by [`write_bundle`].
pub const BUNDLE_CONFIG: &str = "\
tile_source = fixture
tile_cache = tiles
offline = true
resolution = 1.0
window_px = 128
footprint = 40
lateral_overlap = 0.5
scenario = scenario.json
";

/// Writes `parking.plan`, `scenario.json`, `lmpath.conf` and an offline
/// tile cache under `tiles/` into `dir`.
pub fn write_bundle(dir: &Path, seed: u64) -> Result<ParkingLot> {
    let lot = parking_lot(seed);
    let put = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    put("parking.plan", &lot.plan_json)?;
    put("scenario.json", &lot.scenario.to_json()?)?;
    put("lmpath.conf", BUNDLE_CONFIG.as_bytes())?;
    let frame = lot.plan.local_frame()?;
    let z = tiles::select_zoom(lot.plan.geofence.centroid().lat, RESOLUTION)?;
    let (a, b) = lot.plan.geofence.bounds();
    write_tile_cache(&dir.join("tiles"), SOURCE_ID, &TileRange::covering(a, b, z)?, &frame, &lot.scenario)?;
    Ok(lot)
}

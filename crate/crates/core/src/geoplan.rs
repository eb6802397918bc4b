//! QGroundControl `.plan` files, geodesy helpers and polygon containment.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};

/// Latitude limit of the square Web-Mercator world.
pub const MERCATOR_MAX_LAT: f64 = 85.051_128_779_806_59;

/// Mean earth radius (IUGG), metres. The local frame is a sphere of this
/// radius so that planar distances agree with haversine.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const DEFAULT_CRUISE_SPEED: f64 = 5.0;
pub const DEFAULT_FLIGHT_ALTITUDE: f64 = 30.0;

pub const MAV_CMD_NAV_WAYPOINT: u16 = 16;
pub const MAV_FRAME_GLOBAL_RELATIVE_ALT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        GeoPoint { lat, lon }
    }

    pub fn in_mercator_band(self) -> bool {
        self.lat.abs() <= MERCATOR_MAX_LAT
    }

    pub(crate) fn as_plane(self) -> Vec2 {
        Vec2::new(self.lon, self.lat)
    }

    /// Great-circle distance on the mean-radius sphere.
    pub fn haversine(self, o: GeoPoint) -> f64 {
        let (p1, p2) = (self.lat.to_radians(), o.lat.to_radians());
        let dp = p2 - p1;
        let dl = (o.lon - self.lon).to_radians();
        let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().asin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FenceKind {
    InclusionGeofence,
    ExclusionNoFly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPolygon {
    vertices: Vec<GeoPoint>,
    kind: FenceKind,
}

impl GeoPolygon {
    pub fn new(vertices: Vec<GeoPoint>, kind: FenceKind) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegeneratePolygon(format!(
                "{} vertices (need at least 3)",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.lat.is_finite() || !v.lon.is_finite()) {
            return Err(Error::DegeneratePolygon("non-finite vertex".into()));
        }
        let ring: Vec<Vec2> = vertices.iter().map(|v| v.as_plane()).collect();
        if geom::ring_signed_area(&ring) == 0.0 {
            return Err(Error::DegeneratePolygon("zero enclosed area".into()));
        }
        if !geom::ring_is_simple(&ring) {
            return Err(Error::DegeneratePolygon("self-intersecting".into()));
        }
        Ok(GeoPolygon { vertices, kind })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn kind(&self) -> FenceKind {
        self.kind
    }

    /// Planar area centroid in degree space.
    pub fn centroid(&self) -> GeoPoint {
        let ring: Vec<Vec2> = self.vertices.iter().map(|v| v.as_plane()).collect();
        let c = geom::ring_centroid(&ring);
        GeoPoint::new(c.y, c.x)
    }

    pub fn bounds(&self) -> (GeoPoint, GeoPoint) {
        let ring: Vec<Vec2> = self.vertices.iter().map(|v| v.as_plane()).collect();
        let (lo, hi) = geom::bounds(&ring);
        (GeoPoint::new(lo.y, lo.x), GeoPoint::new(hi.y, hi.x))
    }

    pub fn to_local(&self, frame: &LocalFrame) -> Result<Vec<Vec2>> {
        self.vertices.iter().map(|&v| frame.to_local(v)).collect()
    }
}

/// Even-odd containment with boundary points counted as inside.
pub fn contains(poly: &GeoPolygon, p: GeoPoint) -> bool {
    let ring: Vec<Vec2> = poly.vertices.iter().map(|v| v.as_plane()).collect();
    geom::ring_contains(&ring, p.as_plane())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPlan {
    pub geofence: GeoPolygon,
    pub no_fly: Vec<GeoPolygon>,
    pub home: GeoPoint,
    pub home_altitude: f64,
    /// Metres per second.
    pub cruise_speed: f64,
    /// Metres above the take-off point.
    pub flight_altitude: f64,
}

impl GeoPlan {
    pub fn validate(&self) -> Result<()> {
        if self.geofence.kind != FenceKind::InclusionGeofence
            || self.no_fly.iter().any(|p| p.kind != FenceKind::ExclusionNoFly)
        {
            return Err(Error::InvalidParameter("polygon kinds do not match their roles".into()));
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "cruise speed must be positive, got {}",
                self.cruise_speed
            )));
        }
        if !contains(&self.geofence, self.home) {
            return Err(Error::HomeOutsideFence);
        }
        if self.no_fly.iter().any(|z| contains(z, self.home)) {
            return Err(Error::HomeInNoFly);
        }
        Ok(())
    }

    /// Inside the geofence and outside every no-fly zone.
    pub fn is_flyable(&self, p: GeoPoint) -> bool {
        contains(&self.geofence, p) && !self.no_fly.iter().any(|z| contains(z, p))
    }

    /// Local frame centred on the geofence centroid.
    pub fn local_frame(&self) -> Result<LocalFrame> {
        LocalFrame::new(self.geofence.centroid())
    }
}

/// Equirectangular tangent frame: x metres east, y metres north of `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: GeoPoint,
    m_per_deg_lat: f64,
    m_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Result<Self> {
        if !origin.in_mercator_band() || !origin.lon.is_finite() {
            return Err(Error::OutOfBand(origin.lat));
        }
        let m_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Ok(LocalFrame {
            origin,
            m_per_deg_lat,
            m_per_deg_lon: m_per_deg_lat * origin.lat.to_radians().cos(),
        })
    }

    pub fn origin(&self) -> GeoPoint {
        self.origin
    }

    pub fn m_per_deg_lat(&self) -> f64 {
        self.m_per_deg_lat
    }

    pub fn m_per_deg_lon(&self) -> f64 {
        self.m_per_deg_lon
    }

    pub fn to_local(&self, p: GeoPoint) -> Result<Vec2> {
        if !p.in_mercator_band() {
            return Err(Error::OutOfBand(p.lat));
        }
        Ok(Vec2::new(
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * self.m_per_deg_lat,
        ))
    }

    pub fn to_geo(&self, v: Vec2) -> GeoPoint {
        GeoPoint::new(
            self.origin.lat + v.y / self.m_per_deg_lat,
            self.origin.lon + v.x / self.m_per_deg_lon,
        )
    }
}

/// Fallbacks for fields a plan file may omit.
#[derive(Debug, Clone, Copy)]
pub struct PlanDefaults {
    pub cruise_speed: f64,
    pub flight_altitude: f64,
}

impl Default for PlanDefaults {
    fn default() -> Self {
        PlanDefaults {
            cruise_speed: DEFAULT_CRUISE_SPEED,
            flight_altitude: DEFAULT_FLIGHT_ALTITUDE,
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawPlan {
    geo_fence: RawFence,
    mission: RawMission,
}

#[derive(Deserialize)]
struct RawFence {
    #[serde(default)]
    polygons: Vec<RawPolygon>,
    #[serde(default)]
    circles: Vec<Value>,
}

#[derive(Deserialize)]
struct RawPolygon {
    polygon: Vec<Vec<f64>>,
    inclusion: bool,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawMission {
    planned_home_position: Vec<f64>,
    cruise_speed: Option<f64>,
    #[serde(default)]
    items: Vec<Value>,
}

fn lat_lon(pair: &[f64]) -> Result<GeoPoint> {
    match pair {
        [lat, lon, ..] => Ok(GeoPoint::new(*lat, *lon)),
        _ => Err(Error::MalformedPlan(format!("coordinate needs [lat, lon], got {pair:?}"))),
    }
}

/// First NAV_WAYPOINT altitude in the mission, if any.
fn first_waypoint_altitude(items: &[Value]) -> Option<f64> {
    items.iter().find_map(|item| {
        if item.get("command")?.as_u64()? != MAV_CMD_NAV_WAYPOINT as u64 {
            return None;
        }
        item.get("params")?.get(6)?.as_f64()
    })
}

pub fn parse_plan(bytes: &[u8], defaults: &PlanDefaults) -> Result<GeoPlan> {
    let raw: RawPlan =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedPlan(e.to_string()))?;
    if !raw.geo_fence.circles.is_empty() {
        return Err(Error::CircularFence);
    }
    let mut geofence = None;
    let mut inclusions = 0;
    let mut no_fly = Vec::new();
    for rp in raw.geo_fence.polygons {
        let vertices = rp.polygon.iter().map(|c| lat_lon(c)).collect::<Result<Vec<_>>>()?;
        if rp.inclusion {
            inclusions += 1;
            geofence = Some(GeoPolygon::new(vertices, FenceKind::InclusionGeofence)?);
        } else {
            no_fly.push(GeoPolygon::new(vertices, FenceKind::ExclusionNoFly)?);
        }
    }
    if inclusions != 1 {
        return Err(Error::InclusionCount(inclusions));
    }
    let home_raw = &raw.mission.planned_home_position;
    let home = lat_lon(home_raw)?;
    let plan = GeoPlan {
        geofence: geofence.expect("one inclusion polygon"),
        no_fly,
        home,
        home_altitude: home_raw.get(2).copied().unwrap_or(0.0),
        cruise_speed: raw.mission.cruise_speed.unwrap_or(defaults.cruise_speed),
        flight_altitude: first_waypoint_altitude(&raw.mission.items)
            .unwrap_or(defaults.flight_altitude),
    };
    plan.validate()?;
    Ok(plan)
}

fn polygon_json(p: &GeoPolygon) -> Value {
    json!({
        "inclusion": p.kind == FenceKind::InclusionGeofence,
        "polygon": p.vertices.iter().map(|v| [v.lat, v.lon]).collect::<Vec<_>>(),
        "version": 1,
    })
}

fn waypoint_item(seq: usize, p: GeoPoint, alt: f64) -> Value {
    json!({
        "AMSLAltAboveTerrain": null,
        "Altitude": alt,
        "AltitudeMode": 1,
        "autoContinue": true,
        "command": MAV_CMD_NAV_WAYPOINT,
        "doJumpId": seq,
        "frame": MAV_FRAME_GLOBAL_RELATIVE_ALT,
        "params": [0, 0, 0, null, p.lat, p.lon, alt],
        "type": "SimpleItem",
    })
}

/// Emits a QGC plan carrying the plan's fences and home plus one
/// NAV_WAYPOINT per path point in visit order. With `return_home` a final
/// waypoint over home closes the loop.
pub fn write_mission(plan: &GeoPlan, path: &[GeoPoint], return_home: bool) -> Result<Vec<u8>> {
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    if let Some(index) = path.iter().position(|&p| !contains(&plan.geofence, p)) {
        return Err(Error::WaypointOutsideFence { index });
    }
    let alt = plan.flight_altitude;
    let mut items: Vec<Value> =
        path.iter().enumerate().map(|(i, &p)| waypoint_item(i + 1, p, alt)).collect();
    if return_home {
        items.push(waypoint_item(items.len() + 1, plan.home, alt));
    }
    let polygons: Vec<Value> = std::iter::once(&plan.geofence)
        .chain(plan.no_fly.iter())
        .map(polygon_json)
        .collect();
    let doc = json!({
        "fileType": "Plan",
        "geoFence": { "circles": [], "polygons": polygons, "version": 2 },
        "groundStation": "QGroundControl",
        "mission": {
            "cruiseSpeed": plan.cruise_speed,
            "firmwareType": 12,
            "globalPlanAltitudeMode": 1,
            "hoverSpeed": plan.cruise_speed,
            "items": items,
            "plannedHomePosition": [plan.home.lat, plan.home.lon, plan.home_altitude],
            "vehicleType": 2,
            "version": 2,
        },
        "rallyPoints": { "points": [], "version": 2 },
        "version": 1,
    });
    Ok(serde_json::to_vec_pretty(&doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_plan_json(home: [f64; 2], exclusion: Option<[[f64; 2]; 4]>) -> String {
        let fence = [[39.95, -75.19], [39.95, -75.18], [39.96, -75.18], [39.96, -75.19]];
        let mut polys = vec![json!({"inclusion": true, "polygon": fence, "version": 1})];
        if let Some(ex) = exclusion {
            polys.push(json!({"inclusion": false, "polygon": ex, "version": 1}));
        }
        json!({
            "fileType": "Plan",
            "geoFence": {"circles": [], "polygons": polys, "version": 2},
            "mission": {"items": [], "plannedHomePosition": [home[0], home[1], 12.0]},
            "version": 1
        })
        .to_string()
    }

    #[test]
    fn triangle_with_home_at_centroid() {
        let tri = [[0.0, 0.0], [0.0, 0.003], [0.003, 0.0]];
        let doc = json!({
            "geoFence": {"polygons": [{"inclusion": true, "polygon": tri}]},
            "mission": {"plannedHomePosition": [0.001, 0.001, 0.0]}
        });
        let plan = parse_plan(doc.to_string().as_bytes(), &PlanDefaults::default()).unwrap();
        assert_eq!(plan.geofence.vertices().len(), 3);
        assert!(plan.no_fly.is_empty());
        assert_eq!(plan.home, GeoPoint::new(0.001, 0.001));
        assert_eq!(plan.cruise_speed, DEFAULT_CRUISE_SPEED);
        let c = plan.geofence.centroid();
        assert!((c.lat - 0.001).abs() < 1e-15 && (c.lon - 0.001).abs() < 1e-15);
    }

    #[test]
    fn exclusion_square_becomes_no_fly() {
        let ex = [[39.952, -75.188], [39.952, -75.186], [39.954, -75.186], [39.954, -75.188]];
        let text = square_plan_json([39.951, -75.189], Some(ex));
        let plan = parse_plan(text.as_bytes(), &PlanDefaults::default()).unwrap();
        assert_eq!(plan.no_fly.len(), 1);
        assert_eq!(plan.no_fly[0].kind(), FenceKind::ExclusionNoFly);
        assert_eq!(plan.home_altitude, 12.0);
    }

    #[test]
    fn home_inside_exclusion_is_rejected() {
        let ex = [[39.952, -75.188], [39.952, -75.186], [39.954, -75.186], [39.954, -75.188]];
        // Check the fixture geometry against the point-in-polygon primitive first.
        let home = GeoPoint::new(39.953, -75.187);
        let ex_poly = GeoPolygon::new(
            ex.iter().map(|c| GeoPoint::new(c[0], c[1])).collect(),
            FenceKind::ExclusionNoFly,
        )
        .unwrap();
        assert!(contains(&ex_poly, home));
        let text = square_plan_json([home.lat, home.lon], Some(ex));
        let err = parse_plan(text.as_bytes(), &PlanDefaults::default()).unwrap_err();
        assert!(matches!(err, Error::HomeInNoFly), "{err}");
        assert_eq!(err.to_string(), "home in no-fly zone");
    }

    #[test]
    fn parse_errors() {
        let d = PlanDefaults::default();
        assert!(matches!(parse_plan(b"{not json", &d), Err(Error::MalformedPlan(_))));
        let none = json!({"geoFence": {"polygons": []}, "mission": {"plannedHomePosition": [0, 0, 0]}});
        assert!(matches!(parse_plan(none.to_string().as_bytes(), &d), Err(Error::InclusionCount(0))));
        let tri = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let two = json!({
            "geoFence": {"polygons": [{"inclusion": true, "polygon": tri}, {"inclusion": true, "polygon": tri}]},
            "mission": {"plannedHomePosition": [0.2, 0.2, 0]}
        });
        assert!(matches!(parse_plan(two.to_string().as_bytes(), &d), Err(Error::InclusionCount(2))));
        let line = json!({
            "geoFence": {"polygons": [{"inclusion": true, "polygon": [[0.0, 0.0], [1.0, 1.0]]}]},
            "mission": {"plannedHomePosition": [0.0, 0.0, 0]}
        });
        assert!(matches!(
            parse_plan(line.to_string().as_bytes(), &d),
            Err(Error::DegeneratePolygon(_))
        ));
        let outside = square_plan_json([40.5, -75.0], None);
        assert!(matches!(parse_plan(outside.as_bytes(), &d), Err(Error::HomeOutsideFence)));
        let circle = json!({
            "geoFence": {"polygons": [{"inclusion": true, "polygon": tri}],
                         "circles": [{"circle": {"center": [0.2, 0.2], "radius": 10.0}, "inclusion": true}]},
            "mission": {"plannedHomePosition": [0.2, 0.2, 0]}
        });
        assert!(matches!(parse_plan(circle.to_string().as_bytes(), &d), Err(Error::CircularFence)));
    }

    #[test]
    fn cruise_speed_from_file() {
        let mut v: Value = serde_json::from_str(&square_plan_json([39.955, -75.185], None)).unwrap();
        v["mission"]["cruiseSpeed"] = json!(7.5);
        let plan = parse_plan(v.to_string().as_bytes(), &PlanDefaults::default()).unwrap();
        assert_eq!(plan.cruise_speed, 7.5);
    }

    #[test]
    fn mission_items_in_order() {
        let plan = parse_plan(
            square_plan_json([39.955, -75.185], None).as_bytes(),
            &PlanDefaults::default(),
        )
        .unwrap();
        let path = [
            GeoPoint::new(39.951, -75.181),
            GeoPoint::new(39.952, -75.182),
            GeoPoint::new(39.953, -75.183),
        ];
        let bytes = write_mission(&plan, &path, false).unwrap();
        let v: Value = serde_json::from_slice(&bytes).unwrap();
        let items = v["mission"]["items"].as_array().unwrap();
        assert_eq!(items.len(), 3);
        for (item, p) in items.iter().zip(&path) {
            assert_eq!(item["command"], 16);
            assert_eq!(item["frame"], 3);
            assert_eq!(item["params"][4].as_f64().unwrap(), p.lat);
            assert_eq!(item["params"][5].as_f64().unwrap(), p.lon);
            assert_eq!(item["params"][6].as_f64().unwrap(), plan.flight_altitude);
        }
        let with_rtl = write_mission(&plan, &path, true).unwrap();
        let v: Value = serde_json::from_slice(&with_rtl).unwrap();
        assert_eq!(v["mission"]["items"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn write_rejects_bad_paths() {
        let plan = parse_plan(
            square_plan_json([39.955, -75.185], None).as_bytes(),
            &PlanDefaults::default(),
        )
        .unwrap();
        assert!(matches!(write_mission(&plan, &[], false), Err(Error::EmptyPath)));
        let outside = GeoPoint::new(39.97, -75.185);
        assert!(!contains(&plan.geofence, outside));
        let err = write_mission(&plan, &[GeoPoint::new(39.951, -75.181), outside], false);
        assert!(matches!(err, Err(Error::WaypointOutsideFence { index: 1 })));
    }

    #[test]
    fn local_frame_basics() {
        let frame = LocalFrame::new(GeoPoint::new(47.0, 8.0)).unwrap();
        assert_eq!(frame.to_local(frame.origin()).unwrap(), Vec2::new(0.0, 0.0));
        let north = frame.to_local(GeoPoint::new(47.001, 8.0)).unwrap();
        assert!((north.y - 111.19).abs() < 0.1, "{north:?}");
        assert!(north.x.abs() < 0.1);
        assert!(matches!(
            frame.to_local(GeoPoint::new(86.0, 8.0)),
            Err(Error::OutOfBand(_))
        ));
        assert!(LocalFrame::new(GeoPoint::new(-89.0, 0.0)).is_err());
    }

    /// Meridian arc length on the WGS84 ellipsoid, by Simpson quadrature of
    /// the meridional radius of curvature.
    fn wgs84_meridian_arc(lat0: f64, lat1: f64) -> f64 {
        let a = 6_378_137.0_f64;
        let f = 1.0 / 298.257_223_563;
        let e2 = f * (2.0 - f);
        let m = |phi: f64| a * (1.0 - e2) / (1.0 - e2 * phi.sin().powi(2)).powf(1.5);
        let (p0, p1) = (lat0.to_radians(), lat1.to_radians());
        let n = 1000;
        let h = (p1 - p0) / n as f64;
        let mut s = m(p0) + m(p1);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * m(p0 + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn north_offset_matches_meridian_arc() {
        for lat in [45.0, 47.0, 50.0] {
            let frame = LocalFrame::new(GeoPoint::new(lat, -3.0)).unwrap();
            let y = frame.to_local(GeoPoint::new(lat + 0.001, -3.0)).unwrap().y;
            let arc = wgs84_meridian_arc(lat, lat + 0.001);
            assert!((y - arc).abs() < 0.1, "lat {lat}: local {y} vs arc {arc}");
        }
    }

    #[test]
    fn reversed_rings_agree() {
        let l_shape: Vec<GeoPoint> = [
            (0.0, 0.0),
            (0.0, 2.0),
            (1.0, 2.0),
            (1.0, 1.0),
            (2.0, 1.0),
            (2.0, 0.0),
        ]
        .iter()
        .map(|&(lat, lon)| GeoPoint::new(lat, lon))
        .collect();
        let fwd = GeoPolygon::new(l_shape.clone(), FenceKind::InclusionGeofence).unwrap();
        let rev = GeoPolygon::new(l_shape.into_iter().rev().collect(), FenceKind::InclusionGeofence)
            .unwrap();
        // Notch of the L: lat 1.5, lon 1.5.
        assert!(!contains(&fwd, GeoPoint::new(1.5, 1.5)));
        assert!(contains(&fwd, GeoPoint::new(0.5, 1.5)));
        for i in 0..40 {
            for j in 0..40 {
                let p = GeoPoint::new(i as f64 * 0.06 - 0.1, j as f64 * 0.06 - 0.1);
                assert_eq!(contains(&fwd, p), contains(&rev, p));
            }
        }
    }
}

//! GeoJSON overlays for waypoints and planned paths. Coordinates are
//! `[lon, lat]`.

use serde_json::{json, Value};

use crate::geoplan::LocalFrame;
use crate::geom::Vec2;
use crate::planner::{Instance, PathPlan};
use crate::waypoints::WaypointSet;

fn lonlat(frame: &LocalFrame, p: Vec2) -> [f64; 2] {
    let g = frame.to_geo(p);
    [g.lon, g.lat]
}

pub fn waypoints(set: &WaypointSet, frame: &LocalFrame) -> Value {
    let features: Vec<Value> = set
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            json!({
                "type": "Feature",
                "properties": {
                    "index": i,
                    "density": set.masses[i],
                    "cell_area": set.cell_area[i],
                    "mass": set.masses[i] * set.cell_area[i],
                },
                "geometry": { "type": "Point", "coordinates": lonlat(frame, p) },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// The flown path as a LineString whose `t` property lists the arrival time
/// at each vertex (base first, at 0), plus one Point per visited waypoint.
/// With `return_home` the closing leg is appended.
pub fn path(plan: &PathPlan, inst: &Instance, frame: &LocalFrame, return_home: bool) -> Value {
    let mut coords = vec![lonlat(frame, inst.base)];
    let mut times = vec![0.0];
    for (&i, &t) in plan.order.iter().zip(&plan.visit_times) {
        coords.push(lonlat(frame, inst.points[i]));
        times.push(t);
    }
    if return_home && !plan.order.is_empty() {
        coords.push(lonlat(frame, inst.base));
        times.push(times.last().copied().unwrap_or(0.0) + plan.return_length / inst.speed);
    }
    let mut features = vec![json!({
        "type": "Feature",
        "properties": {
            "mode": plan.mode.as_str(),
            "objective": plan.objective,
            "path_length": plan.path_length,
            "tour_length": plan.tour_length(),
            "t": times,
        },
        "geometry": { "type": "LineString", "coordinates": coords },
    })];
    for (rank, (&i, &t)) in plan.order.iter().zip(&plan.visit_times).enumerate() {
        features.push(json!({
            "type": "Feature",
            "properties": { "rank": rank, "index": i, "t": t, "density": inst.masses[i] },
            "geometry": { "type": "Point", "coordinates": lonlat(frame, inst.points[i]) },
        }));
    }
    json!({ "type": "FeatureCollection", "features": features })
}

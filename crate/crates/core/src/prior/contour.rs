//! Marching-squares iso-lines over a heatmap, for GeoJSON overlays.

use serde_json::{json, Value};

use super::HeatMap;

pub const DEFAULT_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

type Segment = [(f64, f64); 2];

/// Iso-line segments at `level` in continuous pixel coordinates (integer
/// coordinates are pixel centres).
pub fn iso_segments(values: &[f64], width: usize, height: usize, level: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    if width < 2 || height < 2 {
        return out;
    }
    let at = |x: usize, y: usize| values[y * width + x];
    let lerp = |a: f64, b: f64| if a == b { 0.5 } else { (level - a) / (b - a) };
    for y in 0..height - 1 {
        for x in 0..width - 1 {
            let (tl, tr, br, bl) = (at(x, y), at(x + 1, y), at(x + 1, y + 1), at(x, y + 1));
            let above = [tl >= level, tr >= level, br >= level, bl >= level];
            let case = above.iter().enumerate().fold(0u8, |c, (i, &a)| c | ((a as u8) << i));
            if case == 0 || case == 15 {
                continue;
            }
            let (fx, fy) = (x as f64, y as f64);
            let top = (fx + lerp(tl, tr), fy);
            let right = (fx + 1.0, fy + lerp(tr, br));
            let bottom = (fx + lerp(bl, br), fy + 1.0);
            let left = (fx, fy + lerp(tl, bl));
            let centre_above = (tl + tr + br + bl) / 4.0 >= level;
            match case {
                1 | 14 => out.push([top, left]),
                2 | 13 => out.push([top, right]),
                4 | 11 => out.push([right, bottom]),
                8 | 7 => out.push([bottom, left]),
                3 | 12 => out.push([left, right]),
                6 | 9 => out.push([top, bottom]),
                // Saddles: tl & br above (5) or tr & bl above (10).
                5 if centre_above => out.extend([[top, right], [bottom, left]]),
                5 => out.extend([[top, left], [right, bottom]]),
                10 if centre_above => out.extend([[top, left], [right, bottom]]),
                10 => out.extend([[top, right], [bottom, left]]),
                _ => unreachable!("4-bit case"),
            }
        }
    }
    out
}

/// FeatureCollection with one MultiLineString per level, levels given as
/// fractions of the heatmap maximum. `to_lonlat` maps continuous pixel
/// coordinates to `[lon, lat]`.
pub fn contours_geojson(heat: &HeatMap, fractions: &[f64], to_lonlat: &dyn Fn(f64, f64) -> [f64; 2]) -> Value {
    let max = heat.max();
    let features: Vec<Value> = fractions
        .iter()
        .filter(|_| max > 0.0)
        .map(|&f| {
            let level = f * max;
            let lines: Vec<Vec<[f64; 2]>> = iso_segments(&heat.values, heat.width, heat.height, level)
                .into_iter()
                .map(|[a, b]| vec![to_lonlat(a.0, a.1), to_lonlat(b.0, b.1)])
                .collect();
            json!({
                "type": "Feature",
                "properties": { "fraction_of_max": f, "density": level },
                "geometry": { "type": "MultiLineString", "coordinates": lines },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

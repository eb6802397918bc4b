//! Static PNG overlays: imagery, heatmap tint, path and waypoints.

use image::{Rgb, RgbImage};
use lmpath_core::HeatMap;

const PATH: Rgb<u8> = Rgb([40, 160, 255]);
const WAYPOINT: Rgb<u8> = Rgb([255, 255, 255]);
const HOME: Rgb<u8> = Rgb([255, 0, 255]);

/// Black → red → yellow → white; overlays use the red to yellow part.
fn heat_colour(t: f64) -> [f64; 3] {
    let c = |v: f64| v.clamp(0.0, 1.0) * 255.0;
    [c(3.0 * t), c(3.0 * t - 1.0), c(3.0 * t - 2.0)]
}

pub fn heat_overlay(base: &RgbImage, heat: &HeatMap) -> RgbImage {
    let mut out = base.clone();
    let max = heat.max();
    if max <= 0.0 {
        return out;
    }
    for (x, y, px) in out.enumerate_pixels_mut() {
        let i = y as usize * heat.width + x as usize;
        if !heat.domain_mask[i] {
            // Dim everything outside the flyable area.
            px.0 = px.0.map(|v| v / 3);
            continue;
        }
        let t = heat.values[i] / max;
        if t > 0.0 {
            let col = heat_colour(0.34 + 0.32 * t);
            let a = 0.6;
            for (v, c) in px.0.iter_mut().zip(col) {
                *v = (*v as f64 * (1.0 - a) + c * a).round() as u8;
            }
        }
    }
    out
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn disc(img: &mut RgbImage, (cx, cy): (f64, f64), r: f64, c: Rgb<u8>) {
    let ri = r.ceil() as i64;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if (dx * dx + dy * dy) as f64 <= r * r {
                put(img, cx.round() as i64 + dx, cy.round() as i64 + dy, c);
            }
        }
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        disc(img, (a.0 + (b.0 - a.0) * f, a.1 + (b.1 - a.1) * f), 1.0, c);
    }
}

/// `path` and `waypoints` are continuous pixel coordinates; `path[0]` is home.
pub fn mission_plot(base: &RgbImage, heat: &HeatMap, path: &[(f64, f64)], waypoints: &[(f64, f64)]) -> RgbImage {
    let mut img = heat_overlay(base, heat);
    for w in path.windows(2) {
        line(&mut img, w[0], w[1], PATH);
    }
    for &p in waypoints {
        disc(&mut img, p, 2.0, WAYPOINT);
    }
    if let Some(&home) = path.first() {
        disc(&mut img, home, 3.5, HOME);
    }
    img
}

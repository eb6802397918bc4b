//! Semantic exploration prior: label expansion, sliding-window segmentation,
//! overlap-averaged label masks and the normalized heatmap.

pub mod contour;
pub mod labels;
pub mod protocol;
pub mod segment;

use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Domain;
use crate::tiles::GeoTransform;

pub use labels::{LabelBackend, LabelExpander, LabelSet, StaticLabelMap};
pub use segment::{segment_windows, SegmentRequest, Segmenter, SyntheticSegmenter, WindowMask};

pub const DEFAULT_OVERLAP: f64 = 0.75;
pub const DEFAULT_WINDOW_PX: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl PixelRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn len(&self) -> usize {
        self.w * self.h
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Offsets of windows of side `w` along an axis of length `dim`. The last
/// window is shifted inward so it ends exactly at the edge.
fn axis_offsets(dim: usize, w: usize, stride: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        if p + w >= dim {
            out.push(dim - w);
            return out;
        }
        out.push(p);
        p += stride;
    }
}

/// Number of windows covering each coordinate of an axis, by a difference array.
fn axis_coverage(dim: usize, w: usize, offsets: &[usize]) -> Vec<u32> {
    let mut diff = vec![0i64; dim + 1];
    for &o in offsets {
        diff[o] += 1;
        diff[o + w] -= 1;
    }
    let mut acc = 0i64;
    diff[..dim]
        .iter()
        .map(|d| {
            acc += d;
            acc as u32
        })
        .collect()
}

/// Overlapping square windows tiling a `width` × `height` image.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrid {
    pub window_px: usize,
    pub stride_px: usize,
    pub overlap: f64,
    pub width: usize,
    pub height: usize,
    win_w: usize,
    win_h: usize,
    xs: Vec<usize>,
    ys: Vec<usize>,
    cover_x: Vec<u32>,
    cover_y: Vec<u32>,
}

impl WindowGrid {
    pub fn new(width: usize, height: usize, window_px: usize, overlap: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyDomain);
        }
        if window_px == 0 {
            return Err(Error::InvalidParameter("window size must be positive".into()));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParameter(format!("overlap {overlap} not in [0, 1)")));
        }
        let stride_px = ((window_px as f64 * (1.0 - overlap)).round() as usize).max(1);
        // Images smaller than a window get one window spanning that axis.
        let win_w = window_px.min(width);
        let win_h = window_px.min(height);
        let xs = axis_offsets(width, win_w, stride_px);
        let ys = axis_offsets(height, win_h, stride_px);
        let cover_x = axis_coverage(width, win_w, &xs);
        let cover_y = axis_coverage(height, win_h, &ys);
        Ok(WindowGrid {
            window_px,
            stride_px,
            overlap,
            width,
            height,
            win_w,
            win_h,
            xs,
            ys,
            cover_x,
            cover_y,
        })
    }

    /// Row-major window list.
    pub fn windows(&self) -> Vec<PixelRect> {
        self.ys
            .iter()
            .flat_map(|&y0| {
                self.xs.iter().map(move |&x0| PixelRect { x0, y0, w: self.win_w, h: self.win_h })
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// |W(x, y)|: windows containing the pixel.
    pub fn coverage(&self, x: usize, y: usize) -> u32 {
        self.cover_x[x] * self.cover_y[y]
    }
}

/// Per-label field M_l with values in [0, 1], aligned to the image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub label: String,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

/// Mean of real-valued window masks over the windows containing each pixel.
/// Each mask is row-major within its rectangle.
pub fn aggregate_fields(
    masks: &[(PixelRect, &[f64])],
    width: usize,
    height: usize,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0f64; width * height];
    let mut count = vec![0u32; width * height];
    for (rect, values) in masks {
        if rect.x0 + rect.w > width || rect.y0 + rect.h > height {
            return Err(Error::DimensionMismatch(format!("window {rect:?} exceeds image")));
        }
        if values.len() != rect.len() {
            return Err(Error::MaskShape { expected: rect.len(), actual: values.len() });
        }
        for wy in 0..rect.h {
            let row = (rect.y0 + wy) * width + rect.x0;
            let src = &values[wy * rect.w..(wy + 1) * rect.w];
            for (wx, &v) in src.iter().enumerate() {
                sum[row + wx] += v;
                count[row + wx] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::UncoveredPixel { x: i % width, y: i / width });
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

/// M_l from the binary window masks of one label.
pub fn aggregate_label(label: &str, masks: &[&WindowMask], grid: &WindowGrid) -> Result<LabelMask> {
    let as_f64: Vec<Vec<f64>> =
        masks.iter().map(|m| m.mask.iter().map(|&b| b as f64).collect()).collect();
    let fields: Vec<(PixelRect, &[f64])> =
        masks.iter().zip(&as_f64).map(|(m, v)| (m.rect, v.as_slice())).collect();
    let values = aggregate_fields(&fields, grid.width, grid.height)?;
    Ok(LabelMask {
        label: label.to_string(),
        width: grid.width,
        height: grid.height,
        values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeOver {
    /// Flyable domain only: mass outside the fence is dropped.
    #[default]
    Domain,
    /// The whole image; every pixel counts as domain.
    Image,
}

/// Normalized density H over the raster, units 1/m².
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// m² per pixel.
    pub cell_area: f64,
    pub domain_mask: Vec<bool>,
    /// Set when every mask was zero over the domain and H is uniform.
    pub uniform_fallback: bool,
}

impl HeatMap {
    /// Σ H · cell_area over the domain.
    pub fn total_mass(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.domain_mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v * self.cell_area)
            .sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn domain_pixels(&self) -> usize {
        self.domain_mask.iter().filter(|&&m| m).count()
    }

    /// Grayscale image scaled so the maximum maps to 255.
    pub fn to_image(&self) -> GrayImage {
        let max = self.max();
        let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
        let bytes = self.values.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8);
        GrayImage::from_raw(self.width as u32, self.height as u32, bytes.collect())
            .expect("heat buffer matches dimensions")
    }

    /// PNG plus a JSON sidecar (`<stem>.json`) carrying the true scale.
    pub fn save_png(&self, path: &Path, transform: Option<&GeoTransform>) -> Result<()> {
        self.to_image().save(path)?;
        let sidecar = HeatmapSidecar {
            width: self.width,
            height: self.height,
            max_density: self.max(),
            value_per_level: self.max() / 255.0,
            cell_area_m2: self.cell_area,
            uniform_fallback: self.uniform_fallback,
            geo_transform: transform.map(|t| [t.a, t.b, t.c, t.d, t.e, t.f]),
        };
        let p = path.with_extension("json");
        std::fs::write(&p, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::io(p, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub width: usize,
    pub height: usize,
    /// Density (1/m²) represented by gray level 255.
    pub max_density: f64,
    pub value_per_level: f64,
    pub cell_area_m2: f64,
    pub uniform_fallback: bool,
    /// Pixel-centre → Web-Mercator affine [a, b, c, d, e, f].
    pub geo_transform: Option<[f64; 6]>,
}

/// Sums the label masks, restricts them to the domain and normalizes so
/// Σ H · cell_area = 1. An all-zero prior falls back to uniform.
pub fn build_heatmap(label_masks: &[LabelMask], domain: &Domain, over: NormalizeOver) -> Result<HeatMap> {
    let grid = &domain.grid;
    let (width, height) = (grid.width, grid.height);
    if let Some(m) = label_masks.iter().find(|m| m.width != width || m.height != height) {
        return Err(Error::DimensionMismatch(format!(
            "mask '{}' is {}x{}, domain is {width}x{height}",
            m.label, m.width, m.height
        )));
    }
    let domain_mask: Vec<bool> = match over {
        NormalizeOver::Domain => domain.mask().to_vec(),
        NormalizeOver::Image => vec![true; width * height],
    };
    let n_domain = domain_mask.iter().filter(|&&m| m).count();
    if n_domain == 0 {
        return Err(Error::EmptyDomain);
    }
    let mut values = vec![0.0f64; width * height];
    for m in label_masks {
        for (v, &x) in values.iter_mut().zip(&m.values) {
            *v += x;
        }
    }
    for (v, &inside) in values.iter_mut().zip(&domain_mask) {
        if !inside {
            *v = 0.0;
        }
    }
    let integral: f64 = values.iter().sum::<f64>() * grid.cell_area;
    let uniform_fallback = !(integral > 0.0);
    if uniform_fallback {
        let density = 1.0 / (n_domain as f64 * grid.cell_area);
        for (v, &inside) in values.iter_mut().zip(&domain_mask) {
            *v = if inside { density } else { 0.0 };
        }
    } else {
        for v in values.iter_mut() {
            *v /= integral;
        }
    }
    Ok(HeatMap { width, height, values, cell_area: grid.cell_area, domain_mask, uniform_fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::raster::RasterGrid;

    fn brute_coverage(windows: &[PixelRect], x: usize, y: usize) -> u32 {
        windows.iter().filter(|w| w.contains(x, y)).count() as u32
    }

    #[test]
    fn stride_and_clamped_edges() {
        let g = WindowGrid::new(1000, 700, 256, 0.75).unwrap();
        assert_eq!(g.stride_px, 64);
        for w in g.windows() {
            assert_eq!((w.w, w.h), (256, 256));
            assert!(w.x0 + w.w <= 1000 && w.y0 + w.h <= 700);
        }
        let ws = g.windows();
        assert!(ws.iter().any(|w| w.x0 + w.w == 1000));
        assert!(ws.iter().any(|w| w.y0 + w.h == 700));
        assert!(WindowGrid::new(10, 10, 4, 1.0).is_err());
        assert!(WindowGrid::new(10, 10, 0, 0.5).is_err());
    }

    #[test]
    fn small_image_gets_single_window() {
        let g = WindowGrid::new(100, 80, 1024, 0.75).unwrap();
        assert_eq!(g.windows(), vec![PixelRect { x0: 0, y0: 0, w: 100, h: 80 }]);
    }

    #[test]
    fn interior_pixel_of_75_percent_grid() {
        // Window 16, stride 4: interior pixels lie in 4 x-windows and 4 y-windows.
        let g = WindowGrid::new(64, 64, 16, 0.75).unwrap();
        let ws = g.windows();
        let (x, y) = (30, 30);
        assert_eq!(brute_coverage(&ws, x, y), 16);
        assert_eq!(g.coverage(x, y), 16);
        // Four covering windows report 1 at (x, y), the rest 0.
        let covering: Vec<usize> = (0..ws.len()).filter(|&i| ws[i].contains(x, y)).collect();
        let ones: Vec<usize> = covering[..4].to_vec();
        let masks: Vec<WindowMask> = ws
            .iter()
            .enumerate()
            .map(|(i, &rect)| {
                let mut mask = vec![0u8; rect.len()];
                if ones.contains(&i) {
                    mask[(y - rect.y0) * rect.w + (x - rect.x0)] = 1;
                }
                WindowMask { window: i, label: 0, rect, mask }
            })
            .collect();
        let refs: Vec<&WindowMask> = masks.iter().collect();
        let m = aggregate_label("l", &refs, &g).unwrap();
        assert_eq!(m.values[y * 64 + x], 0.25);
    }

    #[test]
    fn two_windows_average() {
        let a = PixelRect { x0: 0, y0: 0, w: 2, h: 1 };
        let b = PixelRect { x0: 1, y0: 0, w: 2, h: 1 };
        let out = aggregate_fields(&[(a, &[1.0, 1.0]), (b, &[0.0, 0.0])], 3, 1).unwrap();
        assert_eq!(out, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn uncovered_pixel_is_reported() {
        let a = PixelRect { x0: 0, y0: 0, w: 2, h: 1 };
        let err = aggregate_fields(&[(a, &[1.0, 1.0])], 3, 1).unwrap_err();
        assert!(matches!(err, Error::UncoveredPixel { x: 2, y: 0 }));
        let short = aggregate_fields(&[(a, &[1.0])], 2, 1).unwrap_err();
        assert!(matches!(short, Error::MaskShape { expected: 2, actual: 1 }));
    }

    fn domain_10x10() -> Domain {
        let grid = RasterGrid::regular(10, 10, Vec2::new(0.5, 9.5), 2.0);
        Domain::whole(grid).unwrap()
    }

    fn mask_with(domain: &Domain, f: impl Fn(usize, usize) -> f64) -> LabelMask {
        let (w, h) = (domain.grid.width, domain.grid.height);
        LabelMask {
            label: "x".into(),
            width: w,
            height: h,
            values: (0..w * h).map(|i| f(i % w, i / w)).collect(),
        }
    }

    #[test]
    fn indicator_mask_gives_inverse_area() {
        let d = domain_10x10();
        let m = mask_with(&d, |x, y| (x < 5 && y < 2) as u8 as f64);
        let h = build_heatmap(std::slice::from_ref(&m), &d, NormalizeOver::Domain).unwrap();
        let area = 10.0 * d.grid.cell_area;
        assert!((h.values[0] - 1.0 / area).abs() < 1e-15);
        assert_eq!(h.values[9], 0.0);
        assert!((h.total_mass() - 1.0).abs() < 1e-12);
        let twice = build_heatmap(&[m.clone(), m], &d, NormalizeOver::Domain).unwrap();
        assert_eq!(twice.values, h.values);
        assert!(!h.uniform_fallback);
    }

    #[test]
    fn all_zero_falls_back_to_uniform() {
        let d = domain_10x10();
        let m = mask_with(&d, |_, _| 0.0);
        let h = build_heatmap(&[m], &d, NormalizeOver::Domain).unwrap();
        assert!(h.uniform_fallback);
        let expect = 1.0 / d.area();
        assert!(h.values.iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn heat_outside_domain_is_zero() {
        let grid = RasterGrid::regular(10, 10, Vec2::new(0.5, 9.5), 1.0);
        let fence = vec![Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0), Vec2::new(5.0, 10.0), Vec2::new(0.0, 10.0)];
        let d = Domain::new(grid, fence, vec![]).unwrap();
        let m = mask_with(&d, |_, _| 1.0);
        let h = build_heatmap(std::slice::from_ref(&m), &d, NormalizeOver::Domain).unwrap();
        for (i, v) in h.values.iter().enumerate() {
            if i % 10 >= 5 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!((h.values[0] - 1.0 / 50.0).abs() < 1e-15);
        let whole = build_heatmap(&[m], &d, NormalizeOver::Image).unwrap();
        assert!((whole.values[9] - 1.0 / 100.0).abs() < 1e-15);
        assert!((whole.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let d = domain_10x10();
        let m = LabelMask { label: "x".into(), width: 3, height: 3, values: vec![0.0; 9] };
        assert!(matches!(
            build_heatmap(&[m], &d, NormalizeOver::Domain),
            Err(Error::DimensionMismatch(_))
        ));
    }
}

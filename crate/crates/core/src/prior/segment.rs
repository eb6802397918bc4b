//! Window segmentation: the backend trait, the synthetic ground-truth
//! backend and the worker pool that fans windows out over backends.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use image::RgbImage;

use super::{LabelSet, PixelRect, WindowGrid};
use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::raster::RasterGrid;

pub struct SegmentRequest<'a> {
    pub label: &'a str,
    pub rect: PixelRect,
    /// The full image; backends crop `rect` themselves when they need pixels.
    pub image: &'a RgbImage,
}

impl SegmentRequest<'_> {
    pub fn crop(&self) -> RgbImage {
        let r = self.rect;
        image::imageops::crop_imm(self.image, r.x0 as u32, r.y0 as u32, r.w as u32, r.h as u32)
            .to_image()
    }
}

/// A segmentation model behind one connection. Returns `rect.w * rect.h`
/// bytes, row-major, each 0 or 1.
pub trait Segmenter: Send {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Vec<u8>>;
}

/// Factory producing one backend connection per worker.
pub type SegmenterFactory<'a> = dyn Fn() -> Result<Box<dyn Segmenter>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMask {
    pub window: usize,
    pub label: usize,
    pub rect: PixelRect,
    pub mask: Vec<u8>,
}

#[derive(Debug)]
struct Region {
    label: String,
    ring: Vec<Vec2>,
    lo: Vec2,
    hi: Vec2,
}

/// Rasterizes labelled ground-truth polygons (local metres): a pixel is 1 for
/// label `l` when its centre lies in any region labelled `l`.
#[derive(Debug, Clone)]
pub struct SyntheticSegmenter {
    grid: Arc<RasterGrid>,
    regions: Arc<Vec<Region>>,
}

impl SyntheticSegmenter {
    pub fn new(grid: Arc<RasterGrid>, regions: &[(String, Vec<Vec2>)]) -> Self {
        let regions = regions
            .iter()
            .map(|(label, ring)| {
                let (lo, hi) = geom::bounds(ring);
                Region { label: label.clone(), ring: ring.clone(), lo, hi }
            })
            .collect();
        SyntheticSegmenter { grid, regions: Arc::new(regions) }
    }
}

impl Segmenter for SyntheticSegmenter {
    fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Vec<u8>> {
        let r = req.rect;
        let mut out = vec![0u8; r.len()];
        let matching: Vec<&Region> =
            self.regions.iter().filter(|g| g.label.eq_ignore_ascii_case(req.label)).collect();
        if matching.is_empty() {
            return Ok(out);
        }
        for wy in 0..r.h {
            for wx in 0..r.w {
                let p = self.grid.center(r.x0 + wx, r.y0 + wy);
                let hit = matching.iter().any(|g| {
                    p.x >= g.lo.x
                        && p.x <= g.hi.x
                        && p.y >= g.lo.y
                        && p.y <= g.hi.y
                        && geom::ring_contains(&g.ring, p)
                });
                out[wy * r.w + wx] = hit as u8;
            }
        }
        Ok(out)
    }
}

fn check_mask(rect: PixelRect, mask: &[u8]) -> Result<()> {
    if mask.len() != rect.len() {
        return Err(Error::MaskShape { expected: rect.len(), actual: mask.len() });
    }
    if let Some(bad) = mask.iter().find(|&&b| b > 1) {
        return Err(Error::Protocol(format!("mask value {bad} is not 0 or 1")));
    }
    Ok(())
}

/// One binary mask per (window, label), ordered label-major then by window.
/// `workers` backends are created from `factory`; the result does not
/// depend on which worker handled which window.
pub fn segment_windows(
    image: &RgbImage,
    grid: &WindowGrid,
    labels: &LabelSet,
    factory: &SegmenterFactory<'_>,
    workers: usize,
) -> Result<Vec<WindowMask>> {
    if image.width() as usize != grid.width || image.height() as usize != grid.height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs window grid {}x{}",
            image.width(),
            image.height(),
            grid.width,
            grid.height
        )));
    }
    let windows = grid.windows();
    let tasks: Vec<(usize, usize)> = (0..labels.labels.len())
        .flat_map(|l| (0..windows.len()).map(move |w| (l, w)))
        .collect();
    let slots: Vec<Mutex<Option<Result<Vec<u8>>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let workers = workers.clamp(1, tasks.len().max(1));
    let setup_errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut backend = match factory() {
                    Ok(b) => b,
                    Err(e) => {
                        failed.fetch_add(1, Ordering::SeqCst);
                        setup_errors.lock().expect("error lock").push(e);
                        return;
                    }
                };
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= tasks.len() {
                        break;
                    }
                    let (l, w) = tasks[i];
                    let req = SegmentRequest { label: &labels.labels[l], rect: windows[w], image };
                    let r = backend.segment(&req).and_then(|m| check_mask(windows[w], &m).map(|_| m));
                    let stop = r.is_err();
                    *slots[i].lock().expect("slot lock") = Some(r);
                    if stop {
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = setup_errors.into_inner().expect("error lock").into_iter().next() {
        if failed.load(Ordering::SeqCst) == workers {
            return Err(e);
        }
    }
    let mut out = Vec::with_capacity(tasks.len());
    for (i, slot) in slots.into_iter().enumerate() {
        let (label, window) = tasks[i];
        match slot.into_inner().expect("slot lock") {
            Some(Ok(mask)) => out.push(WindowMask { window, label, rect: windows[window], mask }),
            Some(Err(e)) => return Err(e),
            // Left unprocessed because a worker stopped on an earlier error.
            None => return Err(Error::Backend("segmentation aborted".into())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (RgbImage, WindowGrid, Arc<RasterGrid>) {
        let grid = Arc::new(RasterGrid::regular(40, 30, Vec2::new(0.5, 29.5), 1.0));
        (RgbImage::new(40, 30), WindowGrid::new(40, 30, 16, 0.5).unwrap(), grid)
    }

    fn lot() -> Vec<(String, Vec<Vec2>)> {
        vec![(
            "parking lot".to_string(),
            vec![
                Vec2::new(10.0, 5.0),
                Vec2::new(25.0, 5.0),
                Vec2::new(25.0, 20.0),
                Vec2::new(10.0, 20.0),
            ],
        )]
    }

    #[test]
    fn synthetic_rectangle_is_exact() {
        let (img, wg, grid) = setup();
        let labels = LabelSet::new("car", vec!["parking lot".into(), "road".into()]).unwrap();
        let regions = lot();
        let f = || -> Result<Box<dyn Segmenter>> {
            Ok(Box::new(SyntheticSegmenter::new(grid.clone(), &regions)))
        };
        let masks = segment_windows(&img, &wg, &labels, &f, 3).unwrap();
        assert_eq!(masks.len(), 2 * wg.len());
        for m in &masks {
            for wy in 0..m.rect.h {
                for wx in 0..m.rect.w {
                    let p = grid.center(m.rect.x0 + wx, m.rect.y0 + wy);
                    let inside = (10.0..=25.0).contains(&p.x) && (5.0..=20.0).contains(&p.y);
                    let expect = (m.label == 0 && inside) as u8;
                    assert_eq!(m.mask[wy * m.rect.w + wx], expect);
                }
            }
        }
        // Worker count does not change the output.
        let single = segment_windows(&img, &wg, &labels, &f, 1).unwrap();
        assert_eq!(single, masks);
    }

    struct WrongSize;
    impl Segmenter for WrongSize {
        fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Vec<u8>> {
            Ok(vec![0; req.rect.len() - 1])
        }
    }

    struct NotBinary;
    impl Segmenter for NotBinary {
        fn segment(&mut self, req: &SegmentRequest<'_>) -> Result<Vec<u8>> {
            Ok(vec![2; req.rect.len()])
        }
    }

    #[test]
    fn malformed_masks_are_rejected() {
        let (img, wg, _) = setup();
        let labels = LabelSet::new("car", vec!["road".into()]).unwrap();
        let wrong = || -> Result<Box<dyn Segmenter>> { Ok(Box::new(WrongSize)) };
        let err = segment_windows(&img, &wg, &labels, &wrong, 2).unwrap_err();
        assert!(err.to_string().starts_with("mask shape mismatch"), "{err}");
        let nb = || -> Result<Box<dyn Segmenter>> { Ok(Box::new(NotBinary)) };
        assert!(matches!(segment_windows(&img, &wg, &labels, &nb, 2), Err(Error::Protocol(_))));
        let broken = || -> Result<Box<dyn Segmenter>> { Err(Error::Backend("no such model".into())) };
        assert!(matches!(segment_windows(&img, &wg, &labels, &broken, 2), Err(Error::Backend(_))));
    }
}

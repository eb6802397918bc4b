//! Pixel grid geometry in local metres, and the flyable-domain mask.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::geoplan::{GeoPlan, LocalFrame};
use crate::tiles::{TileMosaic, MERCATOR_RADIUS};

/// Local-metre coordinates of pixel centres. The grid is north-up and
/// separable: a pixel's x depends only on its column, its y only on its row.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    pub width: usize,
    pub height: usize,
    col_x: Vec<f64>,
    row_y: Vec<f64>,
    /// Ground area of one pixel, m².
    pub cell_area: f64,
}

impl RasterGrid {
    /// Regular grid whose pixel (0, 0) centre sits at `top_left`, `pitch`
    /// metres apart, rows running south.
    pub fn regular(width: usize, height: usize, top_left: Vec2, pitch: f64) -> Self {
        RasterGrid {
            width,
            height,
            col_x: (0..width).map(|c| top_left.x + c as f64 * pitch).collect(),
            row_y: (0..height).map(|r| top_left.y - r as f64 * pitch).collect(),
            cell_area: pitch * pitch,
        }
    }

    /// Pixel centres of a Web-Mercator mosaic expressed in `frame`.
    pub fn from_mosaic(mosaic: &TileMosaic, frame: &LocalFrame) -> Self {
        let origin = frame.origin();
        let col_x: Vec<f64> = (0..mosaic.width)
            .map(|c| (mosaic.pixel_to_geo(c as f64, 0.0).lon - origin.lon) * frame.m_per_deg_lon())
            .collect();
        let row_y: Vec<f64> = (0..mosaic.height)
            .map(|r| (mosaic.pixel_to_geo(0.0, r as f64).lat - origin.lat) * frame.m_per_deg_lat())
            .collect();
        // Pixel extents at the frame origin.
        let res_deg = (mosaic.geo_transform.a / MERCATOR_RADIUS).to_degrees();
        let dx = res_deg * frame.m_per_deg_lon();
        let dy = res_deg * origin.lat.to_radians().cos() * frame.m_per_deg_lat();
        RasterGrid {
            width: mosaic.width as usize,
            height: mosaic.height as usize,
            col_x,
            row_y,
            cell_area: dx * dy,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(self.col_x[col], self.row_y[row])
    }

    pub fn center_of(&self, index: usize) -> Vec2 {
        self.center(index % self.width, index / self.width)
    }

    pub fn col_x(&self) -> &[f64] {
        &self.col_x
    }

    pub fn row_y(&self) -> &[f64] {
        &self.row_y
    }

    /// Continuous (col, row) of a local point, by interpolation of the
    /// centre coordinates. Used only for display.
    pub fn locate(&self, p: Vec2) -> (f64, f64) {
        fn interp(axis: &[f64], v: f64) -> f64 {
            if axis.len() < 2 {
                return 0.0;
            }
            let step = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
            (v - axis[0]) / step
        }
        (interp(&self.col_x, p.x), interp(&self.row_y, p.y))
    }
}

/// The flyable area: inside the geofence and outside every no-fly zone,
/// both as polygons in local metres and as a per-pixel mask.
#[derive(Debug, Clone)]
pub struct Domain {
    pub grid: RasterGrid,
    pub fence: Vec<Vec2>,
    pub no_fly: Vec<Vec<Vec2>>,
    mask: Vec<bool>,
    count: usize,
}

impl Domain {
    pub fn new(grid: RasterGrid, fence: Vec<Vec2>, no_fly: Vec<Vec<Vec2>>) -> Result<Self> {
        let width = grid.width;
        let mut mask = vec![false; grid.len()];
        mask.par_chunks_mut(width.max(1)).enumerate().for_each(|(row, line)| {
            for (col, m) in line.iter_mut().enumerate() {
                let p = grid.center(col, row);
                *m = geom::ring_contains(&fence, p)
                    && !no_fly.iter().any(|z| geom::ring_contains(z, p));
            }
        });
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyDomain);
        }
        Ok(Domain { grid, fence, no_fly, mask, count })
    }

    pub fn from_plan(plan: &GeoPlan, frame: &LocalFrame, grid: RasterGrid) -> Result<Self> {
        let fence = plan.geofence.to_local(frame)?;
        let no_fly = plan.no_fly.iter().map(|z| z.to_local(frame)).collect::<Result<_>>()?;
        Domain::new(grid, fence, no_fly)
    }

    /// A domain covering every pixel of the grid.
    pub fn whole(grid: RasterGrid) -> Result<Self> {
        let (lo, hi) = (
            Vec2::new(
                grid.col_x.iter().copied().fold(f64::INFINITY, f64::min),
                grid.row_y.iter().copied().fold(f64::INFINITY, f64::min),
            ),
            Vec2::new(
                grid.col_x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                grid.row_y.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        );
        let fence = vec![lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
        let count = grid.len();
        if count == 0 {
            return Err(Error::EmptyDomain);
        }
        Ok(Domain { mask: vec![true; count], grid, fence, no_fly: Vec::new(), count })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn pixel_count(&self) -> usize {
        self.count
    }

    pub fn area(&self) -> f64 {
        self.count as f64 * self.grid.cell_area
    }

    /// Polygon test: inside the fence and outside every no-fly zone.
    pub fn contains(&self, p: Vec2) -> bool {
        geom::ring_contains(&self.fence, p) && !self.no_fly.iter().any(|z| geom::ring_contains(z, p))
    }

    pub fn pixel_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }
}

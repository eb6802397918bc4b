//! Coverage waypoints, rasterized Voronoi cells and per-cell heat density.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::prior::HeatMap;
use crate::raster::{Domain, RasterGrid};

/// Marks pixels outside the domain in an assignment map.
pub const UNASSIGNED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Cross-track ground swath at flight altitude, metres.
    pub footprint_width: f64,
    /// Fraction of the swath shared by neighbouring passes.
    pub lateral_overlap: f64,
    /// Radius within which a target counts as detected, metres.
    pub detection_radius: f64,
}

impl SensorModel {
    /// Detection radius defaults to half the footprint.
    pub fn new(footprint_width: f64, lateral_overlap: f64) -> Result<Self> {
        Self::with_radius(footprint_width, lateral_overlap, footprint_width / 2.0)
    }

    pub fn with_radius(footprint_width: f64, lateral_overlap: f64, detection_radius: f64) -> Result<Self> {
        if !(footprint_width > 0.0 && footprint_width.is_finite()) {
            return Err(Error::InvalidParameter(format!("footprint width {footprint_width}")));
        }
        if !(0.0..1.0).contains(&lateral_overlap) {
            return Err(Error::InvalidParameter(format!("lateral overlap {lateral_overlap}")));
        }
        if !(detection_radius > 0.0) {
            return Err(Error::InvalidParameter(format!("detection radius {detection_radius}")));
        }
        Ok(SensorModel { footprint_width, lateral_overlap, detection_radius })
    }

    /// Grid pitch between neighbouring waypoints.
    pub fn spacing(&self) -> f64 {
        self.footprint_width * (1.0 - self.lateral_overlap)
    }
}

/// Slack so that a side that is an exact multiple of the spacing does not
/// gain an extra row from rounding.
const COUNT_EPS: f64 = 1e-9;

fn axis_points(lo: f64, hi: f64, pitch: f64) -> Vec<f64> {
    let extent = hi - lo;
    let n = ((extent / pitch - COUNT_EPS).ceil() as usize).max(1);
    let start = lo + (extent - (n - 1) as f64 * pitch) / 2.0;
    (0..n).map(|i| start + i as f64 * pitch).collect()
}

/// Square grid centred on the fence's bounding box, filtered to the flyable
/// domain. Never empty: falls back to the fence centroid, or to the domain
/// pixel closest to it when the centroid is not flyable.
pub fn generate_waypoints(domain: &Domain, sensor: &SensorModel) -> Result<Vec<Vec2>> {
    let pitch = sensor.spacing();
    if !(pitch > 0.0) {
        return Err(Error::InvalidParameter("waypoint spacing must be positive".into()));
    }
    if domain.pixel_count() == 0 {
        return Err(Error::EmptyDomain);
    }
    let (lo, hi) = geom::bounds(&domain.fence);
    let xs = axis_points(lo.x, hi.x, pitch);
    let ys = axis_points(lo.y, hi.y, pitch);
    // North to south, west to east.
    let points: Vec<Vec2> = ys
        .iter()
        .rev()
        .flat_map(|&y| xs.iter().map(move |&x| Vec2::new(x, y)))
        .filter(|&p| domain.contains(p))
        .collect();
    if !points.is_empty() {
        return Ok(points);
    }
    let c = geom::ring_centroid(&domain.fence);
    if domain.contains(c) {
        return Ok(vec![c]);
    }
    let nearest = domain
        .pixel_indices()
        .map(|i| domain.grid.center_of(i))
        .min_by(|a, b| a.dist2(c).total_cmp(&b.dist2(c)))
        .ok_or(Error::EmptyDomain)?;
    Ok(vec![nearest])
}

/// Index of the nearest point, lowest index on ties.
pub fn nearest_index(points: &[Vec2], p: Vec2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = p.dist2(*q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Rasterized Voronoi partition of the masked pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Voronoi {
    /// Waypoint index per pixel, [`UNASSIGNED`] outside the mask.
    pub assignment: Vec<u32>,
    pub pixel_counts: Vec<usize>,
    /// A(v_i), m².
    pub cell_area: Vec<f64>,
}

pub fn assign_voronoi(points: &[Vec2], grid: &RasterGrid, mask: &[bool]) -> Result<Voronoi> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no waypoints to partition around".into()));
    }
    if mask.len() != grid.len() {
        return Err(Error::DimensionMismatch("mask and grid sizes differ".into()));
    }
    let width = grid.width.max(1);
    let mut assignment = vec![UNASSIGNED; grid.len()];
    assignment.par_chunks_mut(width).enumerate().for_each(|(row, line)| {
        for (col, a) in line.iter_mut().enumerate() {
            if mask[row * width + col] {
                *a = nearest_index(points, grid.center(col, row)) as u32;
            }
        }
    });
    let mut pixel_counts = vec![0usize; points.len()];
    for &a in &assignment {
        if a != UNASSIGNED {
            pixel_counts[a as usize] += 1;
        }
    }
    let cell_area = pixel_counts.iter().map(|&c| c as f64 * grid.cell_area).collect();
    Ok(Voronoi { assignment, pixel_counts, cell_area })
}

/// p_i: mean heat density over cell i, (1 / A(v_i)) Σ_{v_i} H · pixel area.
pub fn integrate_masses(heat: &HeatMap, voronoi: &Voronoi) -> Result<Vec<f64>> {
    if voronoi.assignment.len() != heat.values.len() {
        return Err(Error::DimensionMismatch("assignment and heatmap sizes differ".into()));
    }
    let n = voronoi.cell_area.len();
    let mut sums = vec![0.0f64; n];
    for (&a, (&h, &inside)) in voronoi.assignment.iter().zip(heat.values.iter().zip(&heat.domain_mask)) {
        if inside {
            if a == UNASSIGNED {
                return Err(Error::DimensionMismatch("domain pixel without a cell".into()));
            }
            sums[a as usize] += h * heat.cell_area;
        }
    }
    sums.iter()
        .zip(&voronoi.cell_area)
        .enumerate()
        .map(|(i, (&s, &area))| if area > 0.0 { Ok(s / area) } else { Err(Error::ZeroAreaCell(i)) })
        .collect()
}

/// The discrete planning graph: waypoints, their masses and cells.
#[derive(Debug, Clone)]
pub struct WaypointSet {
    pub points: Vec<Vec2>,
    pub masses: Vec<f64>,
    pub cell_area: Vec<f64>,
    pub voronoi: Voronoi,
    pub base: Vec2,
}

impl WaypointSet {
    /// Generates waypoints over `domain`, drops any whose rasterized cell is
    /// empty, and integrates `heat` into masses.
    pub fn build(domain: &Domain, heat: &HeatMap, sensor: &SensorModel, base: Vec2) -> Result<Self> {
        let mut points = generate_waypoints(domain, sensor)?;
        let mut voronoi = assign_voronoi(&points, &domain.grid, &heat.domain_mask)?;
        if voronoi.pixel_counts.contains(&0) {
            points = points
                .into_iter()
                .zip(&voronoi.pixel_counts)
                .filter(|(_, &c)| c > 0)
                .map(|(p, _)| p)
                .collect();
            voronoi = assign_voronoi(&points, &domain.grid, &heat.domain_mask)?;
        }
        let masses = integrate_masses(heat, &voronoi)?;
        Ok(WaypointSet { cell_area: voronoi.cell_area.clone(), points, masses, voronoi, base })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Σ p_i · A(v_i); equals the heatmap's total mass.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().zip(&self.cell_area).map(|(p, a)| p * a).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_heatmap, LabelMask, NormalizeOver};

    fn square_domain(side: f64, pitch: f64) -> Domain {
        let n = (side / pitch) as usize;
        let half = side / 2.0;
        let grid = RasterGrid::regular(n, n, Vec2::new(-half + pitch / 2.0, half - pitch / 2.0), pitch);
        let fence = vec![
            Vec2::new(-half, -half),
            Vec2::new(half, -half),
            Vec2::new(half, half),
            Vec2::new(-half, half),
        ];
        Domain::new(grid, fence, vec![]).unwrap()
    }

    #[test]
    fn hundred_metre_square_gets_four() {
        let d = square_domain(100.0, 1.0);
        let s = SensorModel::new(50.0, 0.0).unwrap();
        let pts = generate_waypoints(&d, &s).unwrap();
        // Enumerate the grid by hand: centres at ±25.
        let expected = [(-25.0, 25.0), (25.0, 25.0), (-25.0, -25.0), (25.0, -25.0)];
        assert_eq!(pts.len(), 4);
        for (p, e) in pts.iter().zip(expected) {
            assert_eq!((p.x, p.y), e);
        }
    }

    #[test]
    fn small_fence_gets_centroid() {
        let d = square_domain(20.0, 1.0);
        let pts = generate_waypoints(&d, &SensorModel::new(50.0, 0.0).unwrap()).unwrap();
        assert_eq!(pts, vec![Vec2::new(0.0, 0.0)]);
    }

    #[test]
    fn no_fly_waypoints_are_dropped() {
        let base = square_domain(100.0, 1.0);
        let hole = vec![
            Vec2::new(10.0, 10.0),
            Vec2::new(40.0, 10.0),
            Vec2::new(40.0, 40.0),
            Vec2::new(10.0, 40.0),
        ];
        let d = Domain::new(base.grid.clone(), base.fence.clone(), vec![hole]).unwrap();
        let pts = generate_waypoints(&d, &SensorModel::new(50.0, 0.0).unwrap()).unwrap();
        assert_eq!(pts.len(), 3);
        assert!(!pts.contains(&Vec2::new(25.0, 25.0)));
    }

    #[test]
    fn centroid_in_no_fly_falls_back_to_nearest_pixel() {
        let base = square_domain(20.0, 1.0);
        let hole = vec![
            Vec2::new(-2.0, -2.0),
            Vec2::new(2.0, -2.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(-2.0, 2.0),
        ];
        let d = Domain::new(base.grid.clone(), base.fence.clone(), vec![hole]).unwrap();
        let pts = generate_waypoints(&d, &SensorModel::new(50.0, 0.0).unwrap()).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(d.contains(pts[0]));
        assert_eq!(pts[0].dist(Vec2::new(0.0, 0.0)), (2.5f64 * 2.5 + 0.5 * 0.5).sqrt());
    }

    #[test]
    fn single_waypoint_owns_everything() {
        let d = square_domain(20.0, 1.0);
        let v = assign_voronoi(&[Vec2::new(3.0, 3.0)], &d.grid, d.mask()).unwrap();
        assert_eq!(v.cell_area, vec![d.area()]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        // 40 x 20 rectangle, two waypoints mirrored about x = 0.
        let grid = RasterGrid::regular(40, 20, Vec2::new(-19.5, 9.5), 1.0);
        let d = Domain::whole(grid).unwrap();
        let v = assign_voronoi(&[Vec2::new(-10.0, 0.0), Vec2::new(10.0, 0.0)], &d.grid, d.mask()).unwrap();
        assert!((v.cell_area[0] - v.cell_area[1]).abs() <= 20.0);
        let tie = assign_voronoi(&[Vec2::new(-10.0, 0.0), Vec2::new(-10.0, 0.0)], &d.grid, d.mask()).unwrap();
        assert_eq!(tie.pixel_counts[1], 0);
    }

    #[test]
    fn uniform_heat_gives_equal_density() {
        let d = square_domain(100.0, 1.0);
        let zero = LabelMask { label: "x".into(), width: 100, height: 100, values: vec![0.0; 10_000] };
        let heat = build_heatmap(&[zero], &d, NormalizeOver::Domain).unwrap();
        let sensor = SensorModel::new(50.0, 0.0).unwrap();
        let set = WaypointSet::build(&d, &heat, &sensor, Vec2::new(0.0, 0.0)).unwrap();
        for &p in &set.masses {
            assert!((p - 1.0 / d.area()).abs() < 1e-15);
        }
        assert!((set.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heat_in_one_cell_only() {
        let d = square_domain(100.0, 1.0);
        // Heat only in the south-west quadrant, which is cell 2 (rows run north to south).
        let values = (0..10_000).map(|i| ((i % 100) < 50 && (i / 100) >= 50) as u8 as f64).collect();
        let m = LabelMask { label: "x".into(), width: 100, height: 100, values };
        let heat = build_heatmap(&[m], &d, NormalizeOver::Domain).unwrap();
        let set = WaypointSet::build(&d, &heat, &SensorModel::new(50.0, 0.0).unwrap(), Vec2::default()).unwrap();
        assert!(set.masses[2] > 0.0);
        for i in [0, 1, 3] {
            assert_eq!(set.masses[i], 0.0);
        }
    }

    #[test]
    fn zero_area_cell_is_an_error() {
        let d = square_domain(10.0, 1.0);
        let heat = build_heatmap(
            &[LabelMask { label: "x".into(), width: 10, height: 10, values: vec![1.0; 100] }],
            &d,
            NormalizeOver::Domain,
        )
        .unwrap();
        let v = assign_voronoi(&[Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)], &d.grid, d.mask()).unwrap();
        assert!(matches!(integrate_masses(&heat, &v), Err(Error::ZeroAreaCell(1))));
    }
}

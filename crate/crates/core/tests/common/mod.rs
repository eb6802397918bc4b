#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use lmpath_core::pipeline::{self, build_prior, plan_mission, Mission, PlanSettings, Prior, PriorSettings, Scene};
use lmpath_core::prior::segment::Segmenter;
use lmpath_core::prior::{LabelExpander, StaticLabelMap, SyntheticSegmenter};
use lmpath_core::synthetic::{self, ParkingLot};
use lmpath_core::tiles::{TileFetcher, TileSource, Transport};
use lmpath_core::{Instance, Mode, Result, Vec2};

/// Transport that records calls and never succeeds.
#[derive(Default)]
pub struct NoNetwork(pub AtomicUsize);

impl Transport for NoNetwork {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(format!("network disabled: {url}"))
    }
}

pub struct Fixture {
    pub lot: ParkingLot,
    pub scene: Scene,
    pub prior: Prior,
    pub net: Arc<NoNetwork>,
    pub requests: usize,
    _cache: tempfile::TempDir,
}

/// Parking-lot scene built from an offline tile cache and the synthetic
/// segmenter.
pub fn parking_fixture(seed: u64) -> Result<Fixture> {
    let lot = synthetic::parking_lot(seed);
    let cache = tempfile::tempdir().expect("tempdir");
    let frame = lot.plan.local_frame()?;
    let range = pipeline::tile_range(&lot.plan, synthetic::RESOLUTION)?;
    synthetic::write_tile_cache(cache.path(), synthetic::SOURCE_ID, &range, &frame, &lot.scenario)?;
    let net = Arc::new(NoNetwork::default());
    let source = TileSource::new(synthetic::SOURCE_ID, "https://tiles.invalid/{z}/{x}/{y}.png")?;
    let fetcher = TileFetcher::new(source, cache.path(), net.clone()).offline(true);
    let scene = Scene::fetch(lot.plan.clone(), &fetcher, synthetic::RESOLUTION)?;
    let requests = fetcher.request_count();

    let labels = LabelExpander::new(Some(StaticLabelMap::bundled()), None).expand("car")?;
    let grid = Arc::new(scene.domain.grid.clone());
    let rings = lot.scenario.region_rings();
    let factory = || -> Result<Box<dyn Segmenter>> { Ok(Box::new(SyntheticSegmenter::new(grid.clone(), &rings))) };
    let settings = PriorSettings { window_px: synthetic::WINDOW_PX, ..PriorSettings::default() };
    let prior = build_prior(&scene.mosaic.to_image(), &scene.domain, &labels, &factory, &settings)?;
    Ok(Fixture { lot, scene, prior, net, requests, _cache: cache })
}

impl Fixture {
    pub fn mission(&self, mode: Mode) -> Result<Mission> {
        let settings = PlanSettings::new(synthetic::sensor(), mode);
        plan_mission(&self.scene.domain, &self.prior.heat, self.scene.home()?, self.lot.plan.cruise_speed, &settings)
    }
}

/// Σ p_i t_i for a visiting order, leg by leg.
pub fn latency(inst: &Instance, order: &[usize]) -> f64 {
    let (mut t, mut obj, mut at) = (0.0, 0.0, inst.base);
    for &i in order {
        t += at.dist(inst.points[i]) / inst.speed;
        obj += inst.masses[i] * t;
        at = inst.points[i];
    }
    obj
}

/// Minimum over all n! visiting orders, by Heap's algorithm.
pub fn brute_force_latency(inst: &Instance) -> f64 {
    let n = inst.len();
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut best = latency(inst, &a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            best = best.min(latency(inst, &a));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

pub fn nearest_brute_force(points: &[Vec2], p: Vec2) -> usize {
    let d: Vec<f64> = points.iter().map(|q| (q.x - p.x).powi(2) + (q.y - p.y).powi(2)).collect();
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    d.iter().position(|&x| x == min).expect("non-empty")
}

//! Acceptance suite: one line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lmpath_core::geoplan::{parse_plan, write_mission, GeoPoint, PlanDefaults};
use lmpath_core::pipeline::{build_prior, PriorSettings};
use lmpath_core::prior::segment::Segmenter;
use lmpath_core::prior::{LabelSet, SyntheticSegmenter, WindowGrid};
use lmpath_core::simeval::{compare, Sampling};
use lmpath_core::synthetic;
use lmpath_core::tiles::{latlon_to_tile, TileFetcher, TileRange, TileSource, MAX_ZOOM};
use lmpath_core::waypoints::{assign_voronoi, generate_waypoints, integrate_masses, SensorModel, UNASSIGNED};
use lmpath_core::{expected_time, solve_baseline_tsp, solve_min_latency, Domain, Error, Instance, Mode, RasterGrid, Vec2};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    (0..200)
        .map(|_| {
            let n = rng.gen_range(2..=9);
            let mut pt = || Vec2::new(rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
            let base = pt();
            let points: Vec<Vec2> = (0..n).map(|_| pt()).collect();
            let masses = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            Instance::new(base, points, masses, 5.0).unwrap()
        })
        .collect()
}

fn solver_optimality() -> Outcome {
    let insts = instances();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (k, inst) in insts.iter().enumerate() {
        let (plan, _) = solve_min_latency(inst, 14).map_err(|e| e.to_string())?;
        let best = common::brute_force_latency(inst);
        let rel = (plan.objective - best).abs() / best;
        worst = worst.max(rel);
        ensure(rel <= 1e-9, || format!("instance {k} (n={}): {} vs oracle {best}", inst.len(), plan.objective))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("200 instances, worst relative error {worst:.1e}, {secs:.2} s including the oracle"))
}

fn dominance() -> Outcome {
    let mut strict = 0;
    let mut non_uniform = 0;
    for (k, inst) in instances().iter().enumerate() {
        let (plan, _) = solve_min_latency(inst, 14).map_err(|e| e.to_string())?;
        let (base, _) = solve_baseline_tsp(inst, 14).map_err(|e| e.to_string())?;
        let eb = expected_time(&base, &inst.masses).raw;
        ensure(plan.objective <= eb * (1.0 + 1e-12), || format!("instance {k}: {} > {eb}", plan.objective))?;
        if inst.masses.iter().any(|&m| m != inst.masses[0]) {
            non_uniform += 1;
            if plan.objective < eb * (1.0 - 1e-12) {
                strict += 1;
            }
        }
    }
    let share = strict as f64 / non_uniform as f64;
    ensure(share >= 0.5, || format!("strict improvement on {strict}/{non_uniform}"))?;
    Ok(format!("never worse; strictly better on {strict}/{non_uniform} non-uniform instances"))
}

fn random_rect(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Vec<Vec2> {
    let (x0, y0) = (rng.gen_range(0.0..w * 0.8), rng.gen_range(0.0..h * 0.8));
    let (x1, y1) = (rng.gen_range(x0 + 1.0..w), rng.gen_range(y0 + 1.0..h));
    vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
}

/// Offsets the sliding-window rule puts along one axis, written out directly.
fn offsets(dim: usize, window: usize, overlap: f64) -> Vec<usize> {
    if window >= dim {
        return vec![0];
    }
    let stride = ((window as f64 * (1.0 - overlap)).round() as usize).max(1);
    let mut v: Vec<usize> = (0..).map(|k| k * stride).take_while(|&o| o + window < dim).collect();
    v.push(dim - window);
    v
}

struct RandomScene {
    domain: Domain,
    rings: Vec<(String, Vec<Vec2>)>,
    labels: LabelSet,
    window: usize,
    overlap: f64,
}

fn random_scene(rng: &mut ChaCha8Rng) -> RandomScene {
    let (w, h) = (rng.gen_range(60..200), rng.gen_range(60..200));
    let pitch = rng.gen_range(0.3..2.0);
    let grid = RasterGrid::regular(w, h, Vec2::new(pitch / 2.0, (h as f64 - 0.5) * pitch), pitch);
    let (wm, hm) = (w as f64 * pitch, h as f64 * pitch);
    let fence = vec![
        Vec2::new(0.05 * wm, 0.0),
        Vec2::new(wm, 0.1 * hm),
        Vec2::new(0.9 * wm, hm),
        Vec2::new(0.0, 0.95 * hm),
    ];
    let no_fly = if rng.gen_bool(0.5) { vec![random_rect(rng, wm, hm)] } else { vec![] };
    // A no-fly box that swallows the whole fence is dropped.
    let domain = Domain::new(grid.clone(), fence.clone(), no_fly).or_else(|_| Domain::new(grid, fence, vec![])).unwrap();
    let names = ["parking lot", "road", "driveway"];
    let rings = (0..rng.gen_range(0..6))
        .map(|_| (names[rng.gen_range(0..3)].to_string(), random_rect(rng, wm, hm)))
        .collect();
    let labels = LabelSet::new("car", names.iter().map(|s| s.to_string())).unwrap();
    let window = rng.gen_range(16..80);
    let overlap = [0.0, 0.25, 0.5, 0.75][rng.gen_range(0..4)];
    RandomScene { domain, rings, labels, window, overlap }
}

fn heatmap_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut sampled = 0;
    for s in 0..25 {
        let sc = random_scene(&mut rng);
        let grid = Arc::new(sc.domain.grid.clone());
        let (w, h) = (grid.width, grid.height);
        let img = image::RgbImage::new(w as u32, h as u32);
        let rings = sc.rings.clone();
        let factory = || -> lmpath_core::Result<Box<dyn Segmenter>> {
            Ok(Box::new(SyntheticSegmenter::new(grid.clone(), &rings)))
        };
        let settings = PriorSettings { window_px: sc.window, overlap: sc.overlap, workers: 3, ..Default::default() };
        let prior = build_prior(&img, &sc.domain, &sc.labels, &factory, &settings).map_err(|e| e.to_string())?;
        let total = prior.heat.total_mass();
        worst = worst.max((total - 1.0).abs());
        ensure((total - 1.0).abs() < 1e-6, || format!("scene {s}: ΣH·area = {total}"))?;
        for m in &prior.label_masks {
            ensure(m.values.iter().all(|v| (0.0..=1.0).contains(v)), || format!("scene {s}: mask outside [0,1]"))?;
        }
        let wg = WindowGrid::new(w, h, sc.window, sc.overlap).map_err(|e| e.to_string())?;
        let (ox, oy) = (offsets(w, sc.window.min(w), sc.overlap), offsets(h, sc.window.min(h), sc.overlap));
        for _ in 0..40 {
            let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
            let cx = ox.iter().filter(|&&o| x >= o && x < o + sc.window.min(w)).count();
            let cy = oy.iter().filter(|&&o| y >= o && y < o + sc.window.min(h)).count();
            let want = (cx * cy) as u32;
            ensure(wg.coverage(x, y) == want, || format!("scene {s}: coverage({x},{y}) {} vs {want}", wg.coverage(x, y)))?;
            // Aggregated value: share of covering windows whose mask is 1,
            // which for the synthetic backend is 0 or 1 at every pixel.
            let p = grid.center(x, y);
            for (l, m) in prior.label_masks.iter().enumerate() {
                let hit = sc.rings.iter().any(|(n, r)| *n == sc.labels.labels[l] && lmpath_core::geom::ring_contains(r, p));
                ensure(m.values[y * w + x] == hit as u8 as f64, || format!("scene {s}: aggregate at ({x},{y})"))?;
            }
            sampled += 1;
        }
    }
    Ok(format!("25 scenes, max |ΣH·area − 1| = {worst:.1e}, {sampled} sampled pixels"))
}

fn voronoi_mass() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for s in 0..25 {
        let sc = random_scene(&mut rng);
        let grid = Arc::new(sc.domain.grid.clone());
        let img = image::RgbImage::new(grid.width as u32, grid.height as u32);
        let rings = sc.rings.clone();
        let factory = || -> lmpath_core::Result<Box<dyn Segmenter>> {
            Ok(Box::new(SyntheticSegmenter::new(grid.clone(), &rings)))
        };
        let settings = PriorSettings { window_px: sc.window, overlap: sc.overlap, workers: 2, ..Default::default() };
        let prior = build_prior(&img, &sc.domain, &sc.labels, &factory, &settings).map_err(|e| e.to_string())?;
        let sensor = SensorModel::new(rng.gen_range(8.0..40.0), rng.gen_range(0.0..0.6)).unwrap();
        let points = generate_waypoints(&sc.domain, &sensor).map_err(|e| e.to_string())?;
        let vor = assign_voronoi(&points, &grid, sc.domain.mask()).map_err(|e| e.to_string())?;
        for _ in 0..40 {
            let idx = rng.gen_range(0..grid.len());
            let got = vor.assignment[idx];
            if sc.domain.mask()[idx] {
                let want = common::nearest_brute_force(&points, grid.center_of(idx));
                ensure(got as usize == want, || format!("scene {s}: pixel {idx} → {got}, brute force {want}"))?;
            } else {
                ensure(got == UNASSIGNED, || format!("scene {s}: pixel {idx} outside domain assigned"))?;
            }
            checked += 1;
        }
        if vor.pixel_counts.contains(&0) {
            continue;
        }
        let p = integrate_masses(&prior.heat, &vor).map_err(|e| e.to_string())?;
        let total: f64 = p.iter().zip(&vor.cell_area).map(|(p, a)| p * a).sum();
        worst = worst.max((total - 1.0).abs());
        ensure((total - 1.0).abs() < 1e-6, || format!("scene {s}: Σ p·A = {total}"))?;
    }
    Ok(format!("{checked} sampled pixels match brute force; max |Σp·A − 1| = {worst:.1e}"))
}

fn search_time_analog() -> Outcome {
    let start = Instant::now();
    let fx = common::parking_fixture(42).map_err(|e| e.to_string())?;
    let lm = fx.mission(Mode::MinExpectedTime).map_err(|e| e.to_string())?;
    let base = fx.mission(Mode::BaselineTsp).map_err(|e| e.to_string())?;
    let plans = [("lmpath".to_string(), lm.plan.clone()), ("baseline".to_string(), base.plan.clone())];
    let radius = synthetic::sensor().detection_radius;
    let summary = compare(&plans, &lm.instance, &fx.lot.scenario, 500, radius, &Sampling::Uniform)
        .map_err(|e| e.to_string())?;
    let win = summary.win_rate[0][1];
    let secs = start.elapsed().as_secs_f64();
    ensure(win >= 0.6, || format!("lmpath beats baseline in {:.1}% of 500 trials", 100.0 * win))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("lmpath beats baseline in {:.1}% of 500 trials ({secs:.1} s)", 100.0 * win))
}

fn lot_first_ordering() -> Outcome {
    let fx = common::parking_fixture(42).map_err(|e| e.to_string())?;
    let m = fx.mission(Mode::MinExpectedTime).map_err(|e| e.to_string())?;
    let ranks = m.plan.ranks(m.instance.len());
    let lot: Vec<usize> = (0..m.instance.len()).filter(|&i| synthetic::in_lot(m.instance.points[i])).collect();
    ensure(!lot.is_empty(), || "no lot waypoints".into())?;
    let last_lot = lot.iter().map(|&i| ranks[i].unwrap()).max().unwrap();
    let first_field = (0..m.instance.len())
        .filter(|i| !lot.contains(i))
        .map(|i| ranks[i].unwrap())
        .min()
        .unwrap_or(usize::MAX);
    ensure(last_lot < first_field, || format!("last lot rank {last_lot}, first field rank {first_field}"))?;
    Ok(format!("{} lot waypoints occupy ranks 0..{last_lot} of {}", lot.len(), m.instance.len()))
}

fn round_trips() -> Outcome {
    let lot = synthetic::parking_lot(3);
    let frame = lot.plan.local_frame().map_err(|e| e.to_string())?;
    let path: Vec<GeoPoint> = [(10.0, 10.0), (-50.0, 40.0), (80.0, -80.0)].iter().map(|&(x, y)| frame.to_geo(Vec2::new(x, y))).collect();
    let bytes = write_mission(&lot.plan, &path, true).map_err(|e| e.to_string())?;
    let back = parse_plan(&bytes, &PlanDefaults::default()).map_err(|e| e.to_string())?;
    for (a, b) in lot.plan.geofence.vertices().iter().zip(back.geofence.vertices()) {
        ensure((a.lat - b.lat).abs() <= 1e-9 && (a.lon - b.lon).abs() <= 1e-9, || format!("vertex {a:?} → {b:?}"))?;
    }
    let (h0, h1) = (lot.plan.home, back.home);
    ensure((h0.lat - h1.lat).abs() <= 1e-9 && (h0.lon - h1.lon).abs() <= 1e-9, || "home moved".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..10_000 {
        let p = GeoPoint::new(rng.gen_range(-85.0..85.0), rng.gen_range(-180.0..180.0));
        let z = rng.gen_range(0..=MAX_ZOOM);
        let t = latlon_to_tile(p, z).map_err(|e| e.to_string())?;
        let (nw, se) = (t.nw_corner(), t.se_corner());
        ensure(
            nw.lat >= p.lat && p.lat >= se.lat && nw.lon <= p.lon && p.lon <= se.lon,
            || format!("point {k} {p:?} not in tile {t:?}"),
        )?;
    }
    Ok("plan geometry preserved within 1e-9°; 10000 points inside their tiles".into())
}

fn hermeticity() -> Outcome {
    let fx = common::parking_fixture(42).map_err(|e| e.to_string())?;
    let attempted = fx.net.0.load(std::sync::atomic::Ordering::SeqCst);
    ensure(fx.requests == 0 && attempted == 0, || format!("{} requests issued", fx.requests.max(attempted)))?;
    // A cold cache in offline mode must fail instead of reaching out.
    let empty = tempfile::tempdir().map_err(|e| e.to_string())?;
    let source = TileSource::new(synthetic::SOURCE_ID, "https://tiles.invalid/{z}/{x}/{y}.png").map_err(|e| e.to_string())?;
    let fetcher = TileFetcher::new(source, empty.path(), fx.net.clone()).offline(true);
    let range = TileRange::covering(synthetic::ORIGIN, synthetic::ORIGIN, 17).map_err(|e| e.to_string())?;
    let miss = fetcher.fetch(&range);
    ensure(matches!(miss, Err(Error::TileCacheMiss { .. })), || "offline cold cache did not report a miss".into())?;
    ensure(fetcher.request_count() == 0, || "offline fetch touched the network".into())?;
    Ok(format!(
        "fixture pipeline ran from {} cached tiles with 0 network requests",
        lmpath_core::pipeline::tile_range(&fx.lot.plan, synthetic::RESOLUTION)
            .map(|r| r.tiles().len())
            .unwrap_or(0)
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("solver optimality vs permutation oracle", solver_optimality),
        ("dominance over baseline TSP", dominance),
        ("heatmap normalization and aggregation", heatmap_normalization),
        ("voronoi assignment and mass", voronoi_mass),
        ("parking-lot search-time comparison", search_time_analog),
        ("lot visited before field", lot_first_ordering),
        ("plan and tile round trips", round_trips),
        ("offline hermetic run", hermeticity),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

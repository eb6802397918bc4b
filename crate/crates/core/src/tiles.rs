//! Web-Mercator XYZ tiles: index math, a disk-cached fetcher and the mosaic
//! compositor.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geoplan::GeoPoint;

pub const TILE_SIZE: u32 = 256;
pub const MAX_ZOOM: u8 = 23;

/// WGS84 semi-major axis used by spherical Web-Mercator.
pub const MERCATOR_RADIUS: f64 = 6_378_137.0;
pub const MERCATOR_HALF_WORLD: f64 = std::f64::consts::PI * MERCATOR_RADIUS;

pub const DEFAULT_RESOLUTION: f64 = 0.3;
pub const DEFAULT_PARALLELISM: usize = 8;
pub const DEFAULT_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileCoord {
    pub z: u8,
    pub x: u32,
    pub y: u32,
}

impl TileCoord {
    pub fn new(z: u8, x: u32, y: u32) -> Option<Self> {
        let n = 1u64 << z;
        (z <= MAX_ZOOM && (x as u64) < n && (y as u64) < n).then_some(TileCoord { z, x, y })
    }

    pub fn nw_corner(self) -> GeoPoint {
        tile_corner(self.z, self.x, self.y)
    }

    pub fn se_corner(self) -> GeoPoint {
        tile_corner(self.z, self.x + 1, self.y + 1)
    }
}

fn tile_corner(z: u8, x: u32, y: u32) -> GeoPoint {
    let n = (1u64 << z) as f64;
    let lon = x as f64 / n * 360.0 - 180.0;
    let lat = (std::f64::consts::PI * (1.0 - 2.0 * y as f64 / n)).sinh().atan().to_degrees();
    GeoPoint::new(lat, lon)
}

fn check_band(p: GeoPoint) -> Result<()> {
    if p.in_mercator_band() && p.lon.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfBand(p.lat))
    }
}

/// Slippy-map tile containing `p`. Points on a tile edge belong to the tile
/// with the higher index.
pub fn latlon_to_tile(p: GeoPoint, z: u8) -> Result<TileCoord> {
    check_band(p)?;
    if z > MAX_ZOOM {
        return Err(Error::InvalidParameter(format!("zoom {z} above {MAX_ZOOM}")));
    }
    let n = (1u64 << z) as f64;
    let max = (1u64 << z) - 1;
    let fx = ((p.lon + 180.0) / 360.0 * n).floor();
    let lat = p.lat.to_radians();
    let fy = ((1.0 - lat.tan().asinh() / std::f64::consts::PI) / 2.0 * n).floor();
    let clamp = |v: f64| (v.max(0.0) as u64).min(max) as u32;
    Ok(TileCoord { z, x: clamp(fx), y: clamp(fy) })
}

pub fn to_mercator(p: GeoPoint) -> (f64, f64) {
    let x = MERCATOR_RADIUS * p.lon.to_radians();
    let y = MERCATOR_RADIUS * p.lat.to_radians().tan().asinh();
    (x, y)
}

pub fn from_mercator(x: f64, y: f64) -> GeoPoint {
    let lon = (x / MERCATOR_RADIUS).to_degrees();
    let lat = (y / MERCATOR_RADIUS).sinh().atan().to_degrees();
    GeoPoint::new(lat, lon)
}

/// Ground metres per pixel of a 256-px tile at latitude `lat` and zoom `z`.
pub fn ground_resolution(lat: f64, z: u8) -> f64 {
    2.0 * MERCATOR_HALF_WORLD / TILE_SIZE as f64 * lat.to_radians().cos() / (1u64 << z) as f64
}

/// Smallest zoom whose ground resolution at `lat` is at most `target_m_per_px`.
pub fn select_zoom(lat: f64, target_m_per_px: f64) -> Result<u8> {
    if !(target_m_per_px > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target resolution must be positive, got {target_m_per_px}"
        )));
    }
    (0..=MAX_ZOOM)
        .find(|&z| ground_resolution(lat, z) <= target_m_per_px)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("{target_m_per_px} m/px needs zoom above {MAX_ZOOM}"))
        })
}

/// Inclusive rectangle of tiles at one zoom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileRange {
    pub z: u8,
    pub x_min: u32,
    pub x_max: u32,
    pub y_min: u32,
    pub y_max: u32,
}

impl TileRange {
    /// Tiles intersecting the box spanned by two opposite corners.
    pub fn covering(a: GeoPoint, b: GeoPoint, z: u8) -> Result<Self> {
        let nw = GeoPoint::new(a.lat.max(b.lat), a.lon.min(b.lon));
        let se = GeoPoint::new(a.lat.min(b.lat), a.lon.max(b.lon));
        let t0 = latlon_to_tile(nw, z)?;
        let t1 = latlon_to_tile(se, z)?;
        Ok(TileRange { z, x_min: t0.x, x_max: t1.x, y_min: t0.y, y_max: t1.y })
    }

    pub fn columns(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn rows(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    /// Row-major from the north-west tile.
    pub fn tiles(&self) -> Vec<TileCoord> {
        (self.y_min..=self.y_max)
            .flat_map(|y| (self.x_min..=self.x_max).map(move |x| TileCoord { z: self.z, x, y }))
            .collect()
    }
}

/// An XYZ tile service reached through a URL template.
#[derive(Debug, Clone)]
pub struct TileSource {
    /// Cache namespace; must be filesystem-safe.
    pub id: String,
    pub template: String,
    pub token: Option<String>,
}

impl TileSource {
    pub fn new(id: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let template = template.into();
        if !["{z}", "{x}", "{y}"].iter().all(|p| template.contains(p)) {
            return Err(Error::BadTemplate(template));
        }
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(Error::InvalidParameter(format!("bad tile source id '{id}'")));
        }
        Ok(TileSource { id, template, token: None })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn url(&self, t: TileCoord) -> String {
        let u = self
            .template
            .replace("{z}", &t.z.to_string())
            .replace("{x}", &t.x.to_string())
            .replace("{y}", &t.y.to_string());
        match &self.token {
            Some(tok) => u.replace("{token}", tok),
            None => u,
        }
    }
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String>;
}

/// Blocking HTTP(S) transport; `file://` URLs are read from disk.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent(concat!("lmpath/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport::new(Duration::from_secs(30))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> std::result::Result<Vec<u8>, String> {
        if let Some(path) = url.strip_prefix("file://") {
            return fs::read(path).map_err(|e| e.to_string());
        }
        let mut resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let mut body = Vec::new();
        resp.body_mut()
            .as_reader()
            .read_to_end(&mut body)
            .map_err(|e| e.to_string())?;
        Ok(body)
    }
}

/// Fetches tiles through a content-addressed disk cache laid out as
/// `<cache>/<source>/<z>/<x>/<y>.img`.
pub struct TileFetcher {
    source: TileSource,
    cache_dir: PathBuf,
    transport: Arc<dyn Transport>,
    offline: bool,
    parallelism: usize,
    retries: u32,
    backoff: Duration,
    requests: AtomicUsize,
}

impl TileFetcher {
    pub fn new(source: TileSource, cache_dir: impl Into<PathBuf>, transport: Arc<dyn Transport>) -> Self {
        TileFetcher {
            source,
            cache_dir: cache_dir.into(),
            transport,
            offline: false,
            parallelism: DEFAULT_PARALLELISM,
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(250),
            requests: AtomicUsize::new(0),
        }
    }

    /// Serve only from the cache; no transport calls are made.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn retries(mut self, retries: u32, base_backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = base_backoff;
        self
    }

    /// Network requests issued so far, retries included.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache_path(&self, t: TileCoord) -> PathBuf {
        cache_path(&self.cache_dir, &self.source.id, t)
    }

    fn download(&self, t: TileCoord) -> Result<Vec<u8>> {
        let url = self.source.url(t);
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.transport.get(&url) {
                Ok(bytes) => return Ok(bytes),
                Err(e) => {
                    log::warn!("tile {url} attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::TileFetch { url, reason: last })
    }

    fn load(&self, t: TileCoord) -> Result<Vec<u8>> {
        let path = self.cache_path(t);
        match fs::read(&path) {
            Ok(bytes) => return Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(path, e)),
        }
        if self.offline {
            return Err(Error::TileCacheMiss {
                source_id: self.source.id.clone(),
                z: t.z,
                x: t.x,
                y: t.y,
            });
        }
        let bytes = self.download(t)?;
        store_atomic(&path, &bytes)?;
        Ok(bytes)
    }

    /// Every tile of `range`, row-major from the north-west corner.
    pub fn fetch(&self, range: &TileRange) -> Result<Vec<(TileCoord, Vec<u8>)>> {
        let tiles = range.tiles();
        let slots: Vec<Mutex<Option<Result<Vec<u8>>>>> =
            tiles.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.parallelism.min(tiles.len()).max(1);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= tiles.len() {
                        break;
                    }
                    let r = self.load(tiles[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        tiles
            .into_iter()
            .zip(slots)
            .map(|(t, slot)| {
                let r = slot.into_inner().expect("slot lock").expect("every slot filled");
                r.map(|b| (t, b))
            })
            .collect()
    }
}

pub fn cache_path(cache_dir: &Path, source_id: &str, t: TileCoord) -> PathBuf {
    cache_dir
        .join(source_id)
        .join(t.z.to_string())
        .join(t.x.to_string())
        .join(format!("{}.img", t.y))
}

fn store_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = path.parent().expect("cache path has a parent");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = path.with_extension(format!(
        "img.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Affine pixel → Web-Mercator map. `(col, row)` are pixel indices; the
/// transform yields the pixel centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform {
    /// x step per column.
    pub a: f64,
    /// x step per row.
    pub b: f64,
    /// x of the centre of pixel (0, 0).
    pub c: f64,
    /// y step per column.
    pub d: f64,
    /// y step per row (negative, north-up).
    pub e: f64,
    /// y of the centre of pixel (0, 0).
    pub f: f64,
}

impl GeoTransform {
    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        (self.a * col + self.b * row + self.c, self.d * col + self.e * row + self.f)
    }

    pub fn invert(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let det = self.a * self.e - self.b * self.d;
        if det == 0.0 {
            return None;
        }
        let (dx, dy) = (x - self.c, y - self.f);
        Some(((self.e * dx - self.b * dy) / det, (self.a * dy - self.d * dx) / det))
    }

    /// World-file order: A, D, B, E, C, F, one per line.
    pub fn world_file(&self) -> String {
        [self.a, self.d, self.b, self.e, self.c, self.f]
            .iter()
            .map(|v| format!("{v:.10}\n"))
            .collect()
    }
}

/// Stitched, north-up RGB raster of a full tile rectangle.
#[derive(Debug, Clone)]
pub struct TileMosaic {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB, three bytes per pixel.
    pub pixels: Vec<u8>,
    pub zoom: u8,
    pub range: TileRange,
    pub geo_transform: GeoTransform,
    /// Ground resolution at the mosaic's centre latitude.
    pub meters_per_pixel: f64,
}

impl TileMosaic {
    pub fn pixel_to_geo(&self, col: f64, row: f64) -> GeoPoint {
        let (x, y) = self.geo_transform.apply(col, row);
        from_mercator(x, y)
    }

    /// Continuous pixel coordinates of `p` (integer values are pixel centres).
    pub fn geo_to_pixel(&self, p: GeoPoint) -> (f64, f64) {
        let (x, y) = to_mercator(p);
        self.geo_transform.invert(x, y).expect("mosaic transform is invertible")
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel buffer matches dimensions")
    }

    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> RgbImage {
        let mut out = RgbImage::new(w, h);
        for row in 0..h {
            let src = (((y0 + row) * self.width + x0) * 3) as usize;
            let dst = (row * w * 3) as usize;
            let n = (w * 3) as usize;
            out.as_mut()[dst..dst + n].copy_from_slice(&self.pixels[src..src + n]);
        }
        out
    }

    /// Sub-mosaic holding every pixel whose centre is within the box spanned
    /// by `a` and `b`, with the transform shifted to match. Never empty.
    pub fn clip(&self, a: GeoPoint, b: GeoPoint) -> TileMosaic {
        let (c0, r0) = self.geo_to_pixel(a);
        let (c1, r1) = self.geo_to_pixel(b);
        let span = |lo: f64, hi: f64, n: u32| {
            let first = (lo.min(hi).ceil().max(0.0) as u32).min(n - 1);
            let last = (lo.max(hi).floor().max(0.0) as u32).min(n - 1).max(first);
            (first, last - first + 1)
        };
        let (x0, w) = span(c0, c1, self.width);
        let (y0, h) = span(r0, r1, self.height);
        let g = self.geo_transform;
        let (c, f) = g.apply(x0 as f64, y0 as f64);
        TileMosaic {
            width: w,
            height: h,
            pixels: self.crop(x0, y0, w, h).into_raw(),
            zoom: self.zoom,
            range: self.range,
            geo_transform: GeoTransform { c, f, ..g },
            meters_per_pixel: self.meters_per_pixel,
        }
    }

    /// Writes `<path>` as PNG and a world-file sidecar next to it.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save(path)?;
        let wf = path.with_extension("pgw");
        fs::write(&wf, self.geo_transform.world_file()).map_err(|e| Error::io(wf, e))
    }
}

/// Stitches a full rectangle of 256-px tiles at zoom `z`.
pub fn compose(tiles: &[(TileCoord, Vec<u8>)], z: u8) -> Result<TileMosaic> {
    if tiles.is_empty() || tiles.iter().any(|(t, _)| t.z != z) {
        return Err(Error::RaggedTiles);
    }
    let x_min = tiles.iter().map(|(t, _)| t.x).min().expect("non-empty");
    let x_max = tiles.iter().map(|(t, _)| t.x).max().expect("non-empty");
    let y_min = tiles.iter().map(|(t, _)| t.y).min().expect("non-empty");
    let y_max = tiles.iter().map(|(t, _)| t.y).max().expect("non-empty");
    let range = TileRange { z, x_min, x_max, y_min, y_max };
    let mut by_coord: HashMap<TileCoord, &[u8]> = HashMap::new();
    for (t, b) in tiles {
        if by_coord.insert(*t, b).is_some() {
            return Err(Error::RaggedTiles);
        }
    }
    if by_coord.len() != (range.columns() * range.rows()) as usize {
        return Err(Error::RaggedTiles);
    }
    let width = range.columns() * TILE_SIZE;
    let height = range.rows() * TILE_SIZE;
    let mut pixels = vec![0u8; (width * height * 3) as usize];
    for (t, bytes) in &by_coord {
        let img = image::load_from_memory(bytes)
            .map_err(|e| Error::TileDecode(format!("{}/{}/{}: {e}", t.z, t.x, t.y)))?
            .to_rgb8();
        if img.width() != TILE_SIZE || img.height() != TILE_SIZE {
            return Err(Error::TileDecode(format!(
                "{}/{}/{}: {}x{} is not a 256-px tile",
                t.z,
                t.x,
                t.y,
                img.width(),
                img.height()
            )));
        }
        let ox = (t.x - x_min) * TILE_SIZE;
        let oy = (t.y - y_min) * TILE_SIZE;
        let raw = img.as_raw();
        for row in 0..TILE_SIZE {
            let src = (row * TILE_SIZE * 3) as usize;
            let dst = (((oy + row) * width + ox) * 3) as usize;
            let n = (TILE_SIZE * 3) as usize;
            pixels[dst..dst + n].copy_from_slice(&raw[src..src + n]);
        }
    }
    let span = 2.0 * MERCATOR_HALF_WORLD / (1u64 << z) as f64;
    let res = span / TILE_SIZE as f64;
    let left = -MERCATOR_HALF_WORLD + x_min as f64 * span;
    let top = MERCATOR_HALF_WORLD - y_min as f64 * span;
    let geo_transform = GeoTransform {
        a: res,
        b: 0.0,
        c: left + 0.5 * res,
        d: 0.0,
        e: -res,
        f: top - 0.5 * res,
    };
    let centre = from_mercator(left + width as f64 * res / 2.0, top - height as f64 * res / 2.0);
    Ok(TileMosaic {
        width,
        height,
        pixels,
        zoom: z,
        range,
        geo_transform,
        meters_per_pixel: ground_resolution(centre.lat, z),
    })
}

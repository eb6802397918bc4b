//! Run configuration: `key = value` file, environment overrides for the
//! tile source and backend command, command-line flags over both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lmpath_core::planner::{Mode, DEFAULT_EXACT_LIMIT};
use lmpath_core::prior::protocol::BACKEND_CMD_ENV;
use lmpath_core::prior::{NormalizeOver, DEFAULT_OVERLAP, DEFAULT_WINDOW_PX};
use lmpath_core::tiles::DEFAULT_RESOLUTION;
use lmpath_core::waypoints::SensorModel;
use lmpath_core::{Error, Result};

pub const TILE_URL_ENV: &str = "TILE_URL";
pub const TILE_TOKEN_ENV: &str = "TILE_TOKEN";

/// Keys accepted in the config file; `-` and `_` are interchangeable.
pub const KEYS: &[&str] = &[
    "tile_url",
    "tile_token",
    "tile_source",
    "tile_cache",
    "offline",
    "resolution",
    "zoom",
    "window_px",
    "overlap",
    "normalize",
    "footprint",
    "lateral_overlap",
    "detection_radius",
    "mode",
    "rho",
    "exact_limit",
    "backend",
    "backend_cmd",
    "scenario",
    "labels_map",
    "workers",
    "out",
    "seed",
    "trials",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    dir: PathBuf,
}

fn canonical_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str, dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key = value", n + 1)))?;
            let key = canonical_key(k);
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::InvalidParameter(format!("config line {}: unknown key '{}'", n + 1, k.trim())));
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(ConfigFile { values, dir: dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.dir.join(p)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Synthetic,
    External,
}

/// Everything a subcommand needs, after merging all sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tile_url: Option<String>,
    pub tile_token: Option<String>,
    pub tile_source: String,
    pub tile_cache: PathBuf,
    pub offline: bool,
    pub resolution: f64,
    pub zoom: Option<u8>,
    pub window_px: usize,
    pub overlap: f64,
    pub normalize: NormalizeOver,
    pub sensor: SensorModel,
    pub mode: Mode,
    pub rho: f64,
    pub exact_limit: usize,
    pub backend: BackendKind,
    pub backend_cmd: Option<String>,
    pub scenario: Option<PathBuf>,
    pub labels_map: Option<PathBuf>,
    pub workers: usize,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: usize,
}

/// Values given on the command line, in config-key form.
pub type Overrides = BTreeMap<&'static str, String>;

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

impl RunConfig {
    /// Flags win over environment, environment over the file.
    pub fn resolve(
        file: &ConfigFile,
        env: &dyn Fn(&str) -> Option<String>,
        flags: &Overrides,
    ) -> Result<Self> {
        let env_key = |key: &str| match key {
            "tile_url" => env(TILE_URL_ENV),
            "tile_token" => env(TILE_TOKEN_ENV),
            "backend_cmd" => env(BACKEND_CMD_ENV),
            _ => None,
        };
        let get = |key: &str| -> Option<String> {
            flags.get(key).cloned().or_else(|| env_key(key)).or_else(|| file.get(key).map(str::to_string))
        };
        let path = |key: &str| -> Option<PathBuf> {
            flags.get(key).map(PathBuf::from).or_else(|| file.path(key))
        };
        let num = |key: &str, default: f64| -> Result<f64> { get(key).map_or(Ok(default), |v| parse_num(key, &v)) };

        let footprint = num("footprint", 40.0)?;
        let lateral = num("lateral_overlap", 0.5)?;
        let sensor = match get("detection_radius") {
            Some(r) => SensorModel::with_radius(footprint, lateral, parse_num("detection_radius", &r)?)?,
            None => SensorModel::new(footprint, lateral)?,
        };
        let overlap = num("overlap", DEFAULT_OVERLAP)?;
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParameter(format!("overlap {overlap} must be in [0, 1)")));
        }
        let rho = num("rho", 0.0)?;
        if !(rho >= 0.0) {
            return Err(Error::InvalidParameter(format!("rho {rho} must be >= 0")));
        }
        let normalize = match get("normalize").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("domain") => NormalizeOver::Domain,
            Some("image") => NormalizeOver::Image,
            Some(other) => return Err(Error::InvalidParameter(format!("normalize: unknown value '{other}'"))),
        };
        let backend = match get("backend").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("synthetic") => BackendKind::Synthetic,
            Some("external") => BackendKind::External,
            Some(other) => return Err(Error::InvalidParameter(format!("backend: unknown value '{other}'"))),
        };
        let cfg = RunConfig {
            tile_url: get("tile_url"),
            tile_token: get("tile_token"),
            tile_source: get("tile_source").unwrap_or_else(|| "default".into()),
            tile_cache: path("tile_cache").unwrap_or_else(|| PathBuf::from("tile-cache")),
            offline: get("offline").map_or(Ok(false), |v| parse_bool("offline", &v))?,
            resolution: num("resolution", DEFAULT_RESOLUTION)?,
            zoom: get("zoom").map(|v| parse_num("zoom", &v)).transpose()?,
            window_px: get("window_px").map_or(Ok(DEFAULT_WINDOW_PX), |v| parse_num("window_px", &v))?,
            overlap,
            normalize,
            sensor,
            mode: get("mode").map_or(Ok(Mode::MinExpectedTime), |v| v.parse())?,
            rho,
            exact_limit: get("exact_limit").map_or(Ok(DEFAULT_EXACT_LIMIT), |v| parse_num("exact_limit", &v))?,
            backend,
            backend_cmd: get("backend_cmd"),
            scenario: path("scenario"),
            labels_map: path("labels_map"),
            workers: get("workers").map_or(Ok(4), |v| parse_num("workers", &v))?,
            out: path("out").unwrap_or_else(|| PathBuf::from("out")),
            seed: get("seed").map(|v| parse_num("seed", &v)).transpose()?,
            trials: get("trials").map_or(Ok(50), |v| parse_num("trials", &v))?,
        };
        for (key, p) in [("scenario", &cfg.scenario), ("labels_map", &cfg.labels_map)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::InvalidParameter(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(cfg)
    }
}

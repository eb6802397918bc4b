use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Input,
    Network,
    Backend,
    Infeasible,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed plan file: {0}")]
    MalformedPlan(String),
    #[error("plan must contain exactly one inclusion polygon, found {0}")]
    InclusionCount(usize),
    #[error("circular geofences are not supported")]
    CircularFence,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("home position outside geofence")]
    HomeOutsideFence,
    #[error("home in no-fly zone")]
    HomeInNoFly,
    #[error("latitude {0} outside the Web-Mercator band")]
    OutOfBand(f64),
    #[error("waypoint {index} lies outside the geofence")]
    WaypointOutsideFence { index: usize },
    #[error("empty path")]
    EmptyPath,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tile template must contain {{z}}, {{x}} and {{y}}: {0}")]
    BadTemplate(String),
    #[error("tile cache miss in offline mode: {source_id}/{z}/{x}/{y}")]
    TileCacheMiss { source_id: String, z: u8, x: u32, y: u32 },
    #[error("tile fetch failed for {url}: {reason}")]
    TileFetch { url: String, reason: String },
    #[error("ragged tile set")]
    RaggedTiles,
    #[error("tile decode failed: {0}")]
    TileDecode(String),

    #[error("no label expansion available for '{0}'")]
    NoLabelExpansion(String),
    #[error("label backend returned no labels for '{0}'")]
    EmptyLabels(String),
    #[error("mask shape mismatch: expected {expected} values, got {actual}")]
    MaskShape { expected: usize, actual: usize },
    #[error("backend protocol violation: {0}")]
    Protocol(String),
    #[error("backend failure: {0}")]
    Backend(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty domain")]
    EmptyDomain,
    #[error("pixel ({x}, {y}) is not covered by any window")]
    UncoveredPixel { x: usize, y: usize },
    #[error("waypoint {0} has a zero-area cell")]
    ZeroAreaCell(usize),

    #[error("instance has no waypoints")]
    EmptyInstance,
    #[error("non-finite instance input: {0}")]
    NonFinite(String),
    #[error("threshold exceeds maximum density")]
    ThresholdTooHigh,
    #[error("scenario has no targets")]
    NoTargets,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn category(&self) -> Category {
        use Error::*;
        match self {
            TileCacheMiss { .. } | TileFetch { .. } => Category::Network,
            NoLabelExpansion(_) | EmptyLabels(_) | MaskShape { .. } | Protocol(_) | Backend(_) => {
                Category::Backend
            }
            ThresholdTooHigh => Category::Infeasible,
            DimensionMismatch(_) | UncoveredPixel { .. } | ZeroAreaCell(_) | Image(_) => {
                Category::Internal
            }
            _ => Category::Input,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

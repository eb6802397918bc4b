//! Target → context-label expansion.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAX_LABELS: usize = 10;

/// Shipped default for `labels.map`.
pub const DEFAULT_LABEL_MAP: &str = "\
# target: comma-separated context labels
car: parking lot, road, driveway
building: building
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub target: String,
    pub labels: Vec<String>,
}

impl LabelSet {
    /// Trims, drops case-insensitive duplicates (first spelling wins) and
    /// keeps at most ten labels.
    pub fn new(target: &str, labels: impl IntoIterator<Item = String>) -> Result<Self> {
        let target = target.trim();
        if target.is_empty() {
            return Err(Error::InvalidParameter("empty target".into()));
        }
        let mut out: Vec<String> = Vec::new();
        for l in labels {
            let l = l.trim();
            if l.is_empty() || out.iter().any(|o| o.eq_ignore_ascii_case(l)) {
                continue;
            }
            out.push(l.to_string());
            if out.len() == MAX_LABELS {
                break;
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyLabels(target.to_string()));
        }
        Ok(LabelSet { target: target.to_string(), labels: out })
    }
}

pub trait LabelBackend: Send {
    fn expand(&mut self, target: &str) -> Result<Vec<String>>;
}

/// User-editable mapping, one `target: label, label, ...` per line.
/// `=` is accepted in place of `:`; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StaticLabelMap {
    entries: HashMap<String, Vec<String>>,
}

impl StaticLabelMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (target, labels) = line.split_once([':', '=']).ok_or_else(|| {
                Error::InvalidParameter(format!("labels.map line {}: expected 'target: labels'", n + 1))
            })?;
            let labels: Vec<String> = labels
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            entries.insert(target.trim().to_lowercase(), labels);
        }
        Ok(StaticLabelMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_LABEL_MAP).expect("bundled label map parses")
    }

    pub fn get(&self, target: &str) -> Option<&[String]> {
        self.entries.get(&target.trim().to_lowercase()).map(Vec::as_slice)
    }
}

/// Static map first, then the external backend; results cached per target.
#[derive(Default)]
pub struct LabelExpander {
    map: Option<StaticLabelMap>,
    external: Option<Box<dyn LabelBackend>>,
    cache: HashMap<String, LabelSet>,
}

impl LabelExpander {
    pub fn new(map: Option<StaticLabelMap>, external: Option<Box<dyn LabelBackend>>) -> Self {
        LabelExpander { map, external, cache: HashMap::new() }
    }

    pub fn expand(&mut self, target: &str) -> Result<LabelSet> {
        let key = target.trim().to_lowercase();
        if key.is_empty() {
            return Err(Error::InvalidParameter("empty target".into()));
        }
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit.clone());
        }
        let labels = if let Some(found) = self.map.as_ref().and_then(|m| m.get(&key)) {
            found.to_vec()
        } else if let Some(ext) = self.external.as_mut() {
            let got = ext.expand(target.trim())?;
            if got.is_empty() {
                return Err(Error::EmptyLabels(target.trim().to_string()));
            }
            got
        } else {
            return Err(Error::NoLabelExpansion(target.trim().to_string()));
        };
        let set = LabelSet::new(target, labels)?;
        self.cache.insert(key, set.clone());
        Ok(set)
    }
}

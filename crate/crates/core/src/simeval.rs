//! Monte Carlo evaluation: fly each plan at constant speed and time the
//! first moment a sampled target comes within detection range.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec2};
use crate::planner::{Instance, PathPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: String,
    pub polygon: Vec<[f64; 2]>,
}

/// Ground truth for synthetic runs, in local metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub regions: Vec<Region>,
    pub targets: Vec<[f64; 2]>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let s: Scenario = serde_json::from_slice(bytes)?;
        for r in &s.regions {
            if r.polygon.len() < 3 {
                return Err(Error::DegeneratePolygon(format!("region '{}' has fewer than 3 vertices", r.label)));
            }
        }
        if s.targets.iter().flatten().chain(s.regions.iter().flat_map(|r| r.polygon.iter().flatten())).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scenario coordinates".into()));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Regions as labelled rings, the form the synthetic segmenter takes.
    pub fn region_rings(&self) -> Vec<(String, Vec<Vec2>)> {
        self.regions
            .iter()
            .map(|r| (r.label.clone(), r.polygon.iter().map(|&[x, y]| Vec2::new(x, y)).collect()))
            .collect()
    }

    pub fn target_points(&self) -> Vec<Vec2> {
        self.targets.iter().map(|&[x, y]| Vec2::new(x, y)).collect()
    }

    /// Every target must lie inside the geofence.
    pub fn validate(&self, fence: &[Vec2]) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::NoTargets);
        }
        if let Some(i) = self.target_points().iter().position(|&t| !geom::ring_contains(fence, t)) {
            return Err(Error::InvalidParameter(format!("target {i} lies outside the geofence")));
        }
        Ok(())
    }
}

/// Earliest time at which `target` is within `radius` of a UAV flying the
/// polyline `path` at `speed`. Closed form per segment.
pub fn detection_time(path: &[Vec2], speed: f64, target: Vec2, radius: f64) -> Option<f64> {
    let first = *path.first()?;
    let r2 = radius * radius;
    if first.dist2(target) <= r2 {
        return Some(0.0);
    }
    let mut t0 = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.dist(b);
        if len > 0.0 {
            let u = (b - a) * (1.0 / len);
            let rel = target - a;
            let proj = rel.dot(u);
            // Entry into the disc: the smaller root of |a + s u - target| = r.
            let disc = proj * proj - (rel.dot(rel) - r2);
            if disc >= 0.0 {
                let s = (proj - disc.sqrt()).max(0.0);
                if s <= len {
                    return Some(t0 + s / speed);
                }
            }
        }
        t0 += len / speed;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub target_index: usize,
    pub plan: usize,
    /// `None` when the target is never within range.
    pub detection_time: Option<f64>,
}

/// Flies `plan` from `inst.base` and reports when `target` is detected.
pub fn run_trial(plan: &PathPlan, inst: &Instance, target: Vec2, radius: f64) -> Option<f64> {
    detection_time(&plan.path_points(inst), inst.speed, target, radius)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Each target equally likely.
    Uniform,
    /// Target k drawn with probability proportional to `weights[k]`.
    Weighted(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub id: String,
    /// Over detected trials only; `None` when nothing was detected.
    pub mean_time: Option<f64>,
    pub median_time: Option<f64>,
    pub std_error: Option<f64>,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub seed: u64,
    pub plans: Vec<PlanStats>,
    /// `win_rate[a][b]`: share of trials where plan a detected strictly
    /// sooner than plan b, ties counted half. Undetected is slower than any
    /// detection.
    pub win_rate: Vec<Vec<f64>>,
    #[serde(skip)]
    pub results: Vec<Vec<TrialResult>>,
}

fn trial_target(seed: u64, trial: usize, picker: &Option<WeightedIndex<f64>>, n: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    match picker {
        Some(w) => w.sample(&mut rng),
        None => rng.gen_range(0..n),
    }
}

fn cmp_time(a: Option<f64>, b: Option<f64>) -> Ordering {
    let inf = f64::INFINITY;
    a.unwrap_or(inf).total_cmp(&b.unwrap_or(inf))
}

/// Runs `trials` seeded trials. Trial k draws its target from a stream keyed
/// on (scenario seed, k), so results do not depend on thread scheduling.
pub fn compare(
    plans: &[(String, PathPlan)],
    inst: &Instance,
    scenario: &Scenario,
    trials: usize,
    radius: f64,
    sampling: &Sampling,
) -> Result<Summary> {
    if scenario.targets.is_empty() {
        return Err(Error::NoTargets);
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if plans.is_empty() {
        return Err(Error::InvalidParameter("no plans to compare".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("detection radius {radius}")));
    }
    let picker = match sampling {
        Sampling::Uniform => None,
        Sampling::Weighted(w) => {
            if w.len() != scenario.targets.len() {
                return Err(Error::DimensionMismatch("one weight per target".into()));
            }
            Some(WeightedIndex::new(w).map_err(|e| Error::InvalidParameter(format!("target weights: {e}")))?)
        }
    };
    let targets = scenario.target_points();
    let paths: Vec<Vec<Vec2>> = plans.iter().map(|(_, p)| p.path_points(inst)).collect();

    let per_trial: Vec<Vec<TrialResult>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let target_index = trial_target(scenario.seed, trial, &picker, targets.len());
            paths
                .iter()
                .enumerate()
                .map(|(plan, path)| TrialResult {
                    trial,
                    target_index,
                    plan,
                    detection_time: detection_time(path, inst.speed, targets[target_index], radius),
                })
                .collect()
        })
        .collect();

    let mut results: Vec<Vec<TrialResult>> = vec![Vec::with_capacity(trials); plans.len()];
    for row in &per_trial {
        for r in row {
            results[r.plan].push(*r);
        }
    }

    let stats = plans
        .iter()
        .zip(&results)
        .map(|((id, _), rs)| {
            let mut times: Vec<f64> = rs.iter().filter_map(|r| r.detection_time).collect();
            let k = times.len();
            let (mean, median, se) = if k == 0 {
                (None, None, None)
            } else {
                let mean = times.iter().sum::<f64>() / k as f64;
                times.sort_by(f64::total_cmp);
                let median = if k % 2 == 1 { times[k / 2] } else { (times[k / 2 - 1] + times[k / 2]) / 2.0 };
                let se = if k > 1 {
                    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
                    Some((var / k as f64).sqrt())
                } else {
                    None
                };
                (Some(mean), Some(median), se)
            };
            PlanStats {
                id: id.clone(),
                mean_time: mean,
                median_time: median,
                std_error: se,
                detection_rate: k as f64 / trials as f64,
            }
        })
        .collect();

    let m = plans.len();
    let mut win_rate = vec![vec![0.0; m]; m];
    for (a, row) in win_rate.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            let score: f64 = (0..trials)
                .map(|k| match cmp_time(results[a][k].detection_time, results[b][k].detection_time) {
                    Ordering::Less => 1.0,
                    Ordering::Equal => 0.5,
                    Ordering::Greater => 0.0,
                })
                .sum();
            *cell = score / trials as f64;
        }
    }
    Ok(Summary { trials, seed: scenario.seed, plans: stats, win_rate, results })
}

impl Summary {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |t| format!("{t:.1}"));
        let mut s = String::new();
        let _ = writeln!(s, "{} trials, seed {}", self.trials, self.seed);
        let _ = writeln!(s, "{:<20} {:>10} {:>10} {:>9}", "plan", "mean [s]", "median [s]", "detected");
        for p in &self.plans {
            let _ = writeln!(
                s,
                "{:<20} {:>10} {:>10} {:>8.1}%",
                p.id,
                fmt(p.mean_time),
                fmt(p.median_time),
                100.0 * p.detection_rate
            );
        }
        for (a, pa) in self.plans.iter().enumerate() {
            for (b, pb) in self.plans.iter().enumerate() {
                if a != b {
                    let _ = writeln!(s, "{} beats {} {:.1}% of trials", pa.id, pb.id, 100.0 * self.win_rate[a][b]);
                }
            }
        }
        s
    }
}

//! Search-path planners over a waypoint set: minimum expected detection
//! time, threshold-filtered TSP and the mass-agnostic TSP baseline.

mod exact;
mod heuristic;
mod tsp;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::waypoints::WaypointSet;

pub use heuristic::lower_bound;

/// Largest instance handed to the exhaustive subset DP by default.
pub const DEFAULT_EXACT_LIMIT: usize = 14;
/// Hard cap on the subset DP; memory grows as n · 2^n.
pub const MAX_EXACT_LIMIT: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub base: Vec2,
    pub points: Vec<Vec2>,
    pub masses: Vec<f64>,
    /// Cruise speed, m/s.
    pub speed: f64,
}

impl Instance {
    pub fn new(base: Vec2, points: Vec<Vec2>, masses: Vec<f64>, speed: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if points.len() != masses.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        if !base.is_finite() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("coordinates".into()));
        }
        if masses.iter().any(|m| !m.is_finite()) || !speed.is_finite() {
            return Err(Error::NonFinite("masses or speed".into()));
        }
        if masses.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidParameter("negative mass".into()));
        }
        if speed <= 0.0 {
            return Err(Error::InvalidParameter(format!("speed {speed} must be positive")));
        }
        Ok(Instance { base, points, masses, speed })
    }

    pub fn from_waypoints(set: &WaypointSet, speed: f64) -> Result<Self> {
        Instance::new(set.base, set.points.clone(), set.masses.clone(), speed)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance between waypoints, `None` standing for the base.
    pub fn dist(&self, i: Option<usize>, j: Option<usize>) -> f64 {
        let at = |k: Option<usize>| k.map_or(self.base, |k| self.points[k]);
        at(i).dist(at(j))
    }

    /// Constant for a big-M formulation: strictly above any feasible visit time.
    pub fn big_m(&self) -> f64 {
        let nodes: Vec<Vec2> = std::iter::once(self.base).chain(self.points.iter().copied()).collect();
        let mut max = 0.0f64;
        for a in &nodes {
            for b in &nodes {
                max = max.max(a.dist(*b));
            }
        }
        (self.points.len() + 1) as f64 * max / self.speed
    }

    fn subset(&self, keep: &[usize]) -> Instance {
        Instance {
            base: self.base,
            points: keep.iter().map(|&i| self.points[i]).collect(),
            masses: keep.iter().map(|&i| self.masses[i]).collect(),
            speed: self.speed,
        }
    }
}

/// Dense distance table over the base (index 0) and waypoints (1..=n).
pub(crate) struct DistTable {
    n: usize,
    d: Vec<f64>,
}

impl DistTable {
    pub(crate) fn new(inst: &Instance) -> Self {
        let nodes: Vec<Vec2> = std::iter::once(inst.base).chain(inst.points.iter().copied()).collect();
        let m = nodes.len();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = nodes[i].dist(nodes[j]);
            }
        }
        DistTable { n: inst.points.len(), d }
    }

    /// Waypoint to waypoint.
    #[inline]
    pub(crate) fn ww(&self, i: usize, j: usize) -> f64 {
        self.d[(i + 1) * (self.n + 1) + j + 1]
    }

    /// Base to waypoint.
    #[inline]
    pub(crate) fn bw(&self, i: usize) -> f64 {
        self.d[i + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MinExpectedTime,
    ThresholdTsp,
    BaselineTsp,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MinExpectedTime => "min-expected-time",
            Mode::ThresholdTsp => "threshold-tsp",
            Mode::BaselineTsp => "baseline-tsp",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min-expected-time" | "min-latency" | "lmpath" => Ok(Mode::MinExpectedTime),
            "threshold-tsp" | "threshold" => Ok(Mode::ThresholdTsp),
            "baseline-tsp" | "baseline" => Ok(Mode::BaselineTsp),
            other => Err(Error::InvalidParameter(format!("unknown planner mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Optimality {
    ProvenOptimal,
    Heuristic { lower_bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    /// Waypoint indices in visiting order, starting from the base.
    pub order: Vec<usize>,
    /// Arrival time at `order[k]`, seconds.
    pub visit_times: Vec<f64>,
    /// Σ p_i t_i over the visited waypoints.
    pub objective: f64,
    pub mode: Mode,
    pub optimality: Optimality,
    /// Base → order → last, metres.
    pub path_length: f64,
    /// Length of the final leg back to the base, metres.
    pub return_length: f64,
}

impl PathPlan {
    /// Builds times and objective from an order, with every leg flown at
    /// full speed so that consecutive times are tight.
    pub fn from_order(inst: &Instance, order: Vec<usize>, mode: Mode, optimality: Optimality) -> Self {
        let mut visit_times = Vec::with_capacity(order.len());
        let mut t = 0.0;
        let mut length = 0.0;
        let mut prev = None;
        let mut objective = 0.0;
        for &i in &order {
            let d = inst.dist(prev, Some(i));
            length += d;
            t += d / inst.speed;
            objective += inst.masses[i] * t;
            visit_times.push(t);
            prev = Some(i);
        }
        let return_length = if order.is_empty() { 0.0 } else { inst.dist(prev, None) };
        PathPlan { order, visit_times, objective, mode, optimality, path_length: length, return_length }
    }

    pub fn tour_length(&self) -> f64 {
        self.path_length + self.return_length
    }

    pub fn is_proven_optimal(&self) -> bool {
        self.optimality == Optimality::ProvenOptimal
    }

    /// Visit rank per waypoint index, `None` for waypoints not on the path.
    pub fn ranks(&self, n: usize) -> Vec<Option<usize>> {
        let mut r = vec![None; n];
        for (k, &i) in self.order.iter().enumerate() {
            r[i] = Some(k);
        }
        r
    }

    /// Coordinates of the flown path, base first, without the return leg.
    pub fn path_points(&self, inst: &Instance) -> Vec<Vec2> {
        std::iter::once(inst.base).chain(self.order.iter().map(|&i| inst.points[i])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub nodes_explored: u64,
    #[serde(with = "secs")]
    pub wall_time: Duration,
    pub bound_gap: f64,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?.max(0.0)))
    }
}

/// Expected detection time of a plan under a set of masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTime {
    /// Σ p_i t_i over visited waypoints.
    pub raw: f64,
    /// raw / Σ p_i over visited waypoints; 0 when that sum is 0.
    pub normalized: f64,
    pub covered_mass: f64,
    pub total_mass: f64,
    /// True when positive mass lies off the path, so `normalized` is
    /// conditional on the covered part.
    pub conditional: bool,
}

pub fn expected_time(plan: &PathPlan, masses: &[f64]) -> ExpectedTime {
    let mut raw = 0.0;
    let mut covered = 0.0;
    let mut visited = vec![false; masses.len()];
    for (&i, &t) in plan.order.iter().zip(&plan.visit_times) {
        raw += masses[i] * t;
        covered += masses[i];
        visited[i] = true;
    }
    let total: f64 = masses.iter().sum();
    let conditional = masses.iter().zip(&visited).any(|(&m, &v)| m > 0.0 && !v);
    let normalized = if covered > 0.0 { raw / covered } else { 0.0 };
    ExpectedTime { raw, normalized, covered_mass: covered, total_mass: total, conditional }
}

fn check_limit(exact_limit: usize) -> Result<()> {
    if exact_limit > MAX_EXACT_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "exact limit {exact_limit} exceeds {MAX_EXACT_LIMIT}"
        )));
    }
    Ok(())
}

/// Order minimizing Σ p_i t_i. Exact when `inst.len() <= exact_limit`,
/// otherwise greedy construction plus local search, with a lower bound.
pub fn solve_min_latency(inst: &Instance, exact_limit: usize) -> Result<(PathPlan, SolveReport)> {
    check_limit(exact_limit)?;
    let start = Instant::now();
    let table = DistTable::new(inst);
    if inst.len() <= exact_limit {
        let (order, nodes) = exact::min_latency(inst, &table);
        let plan = PathPlan::from_order(inst, order, Mode::MinExpectedTime, Optimality::ProvenOptimal);
        let report = SolveReport { nodes_explored: nodes, wall_time: start.elapsed(), bound_gap: 0.0 };
        return Ok((plan, report));
    }
    let baseline = tsp::heuristic_tour(inst, &table);
    let (order, nodes) = heuristic::min_latency(inst, &table, &baseline);
    let lb = heuristic::lower_bound(inst);
    let mut plan = PathPlan::from_order(inst, order, Mode::MinExpectedTime, Optimality::ProvenOptimal);
    let gap = (plan.objective - lb).max(0.0);
    if gap > 0.0 {
        plan.optimality = Optimality::Heuristic { lower_bound: lb };
    }
    Ok((plan, SolveReport { nodes_explored: nodes, wall_time: start.elapsed(), bound_gap: gap }))
}

/// Shortest closed tour from the base through every waypoint.
pub fn solve_baseline_tsp(inst: &Instance, exact_limit: usize) -> Result<(PathPlan, SolveReport)> {
    check_limit(exact_limit)?;
    let start = Instant::now();
    let (order, nodes, exact) = tsp::solve(inst, exact_limit);
    let optimality = if exact {
        Optimality::ProvenOptimal
    } else {
        Optimality::Heuristic { lower_bound: tsp::lower_bound(inst) }
    };
    let plan = PathPlan::from_order(inst, order, Mode::BaselineTsp, optimality);
    let gap = match optimality {
        Optimality::ProvenOptimal => 0.0,
        Optimality::Heuristic { lower_bound } => (plan.tour_length() - lower_bound).max(0.0),
    };
    Ok((plan, SolveReport { nodes_explored: nodes, wall_time: start.elapsed(), bound_gap: gap }))
}

/// Shortest closed tour through the waypoints with p_i ≥ ρ. Indices in the
/// returned plan refer to the full instance.
pub fn solve_threshold_tsp(inst: &Instance, rho: f64, exact_limit: usize) -> Result<(PathPlan, SolveReport)> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {rho} must be a finite value >= 0")));
    }
    let keep: Vec<usize> = (0..inst.len()).filter(|&i| inst.masses[i] >= rho).collect();
    if keep.is_empty() {
        return Err(Error::ThresholdTooHigh);
    }
    let sub = inst.subset(&keep);
    let (plan, report) = solve_baseline_tsp(&sub, exact_limit)?;
    let order = plan.order.iter().map(|&k| keep[k]).collect();
    let mut full = PathPlan::from_order(inst, order, Mode::ThresholdTsp, plan.optimality);
    full.mode = Mode::ThresholdTsp;
    Ok((full, report))
}

/// Dispatch on `mode`; `rho` is only read by the threshold planner.
pub fn solve(inst: &Instance, mode: Mode, rho: f64, exact_limit: usize) -> Result<(PathPlan, SolveReport)> {
    match mode {
        Mode::MinExpectedTime => solve_min_latency(inst, exact_limit),
        Mode::ThresholdTsp => solve_threshold_tsp(inst, rho, exact_limit),
        Mode::BaselineTsp => solve_baseline_tsp(inst, exact_limit),
    }
}

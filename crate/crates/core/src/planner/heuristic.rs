//! Minimum-latency heuristic for instances above the exact limit.

use super::{DistTable, Instance};

fn objective(inst: &Instance, d: &DistTable, order: &[usize]) -> f64 {
    let mut t = 0.0;
    let mut obj = 0.0;
    let mut prev: Option<usize> = None;
    for &k in order {
        t += prev.map_or(d.bw(k), |p| d.ww(p, k)) / inst.speed;
        obj += inst.masses[k] * t;
        prev = Some(k);
    }
    obj
}

/// Repeatedly flies to the waypoint with the most mass per second of travel.
/// Ties go to the nearer waypoint, then the lower index.
fn greedy(inst: &Instance, d: &DistTable) -> Vec<usize> {
    let n = inst.len();
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur: Option<usize> = None;
    for _ in 0..n {
        let mut best: Option<(f64, f64, usize)> = None;
        for k in (0..n).filter(|&k| !used[k]) {
            let dist = cur.map_or(d.bw(k), |c| d.ww(c, k));
            let ratio = if dist > 0.0 { inst.masses[k] * inst.speed / dist } else { f64::INFINITY };
            let better = match best {
                None => true,
                Some((r, dd, _)) => ratio > r || ratio == r && dist < dd,
            };
            if better {
                best = Some((ratio, dist, k));
            }
        }
        let k = best.expect("unvisited waypoint").2;
        used[k] = true;
        order.push(k);
        cur = Some(k);
    }
    order
}

/// First-improvement descent over segment reversal, relocation of runs of
/// up to three waypoints, and pairwise swaps. Returns the number of
/// candidate orders evaluated.
fn descend(inst: &Instance, d: &DistTable, order: &mut Vec<usize>) -> u64 {
    let n = order.len();
    let mut best = objective(inst, d, order);
    let mut evaluated = 0u64;
    let mut cand = order.clone();
    let accept = |cand: &Vec<usize>, order: &mut Vec<usize>, best: &mut f64, evaluated: &mut u64| {
        *evaluated += 1;
        let c = objective(inst, d, cand);
        if c < *best - 1e-12 * best.abs() {
            *best = c;
            order.clone_from(cand);
            true
        } else {
            false
        }
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in i + 1..n {
                cand.clone_from(order);
                cand[i..=j].reverse();
                changed |= accept(&cand, order, &mut best, &mut evaluated);
            }
        }
        for len in 1..=3.min(n) {
            for i in 0..=n - len {
                for to in 0..=n - len {
                    if to == i {
                        continue;
                    }
                    cand.clone_from(order);
                    let seg: Vec<usize> = cand.drain(i..i + len).collect();
                    cand.splice(to..to, seg);
                    changed |= accept(&cand, order, &mut best, &mut evaluated);
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                cand.clone_from(order);
                cand.swap(i, j);
                changed |= accept(&cand, order, &mut best, &mut evaluated);
            }
        }
    }
    evaluated
}

/// Best local optimum over three seeds: the greedy order and the baseline
/// tour in both directions. Seeding with the baseline keeps the result no
/// worse than the baseline's own expected time.
pub(crate) fn min_latency(inst: &Instance, d: &DistTable, baseline: &[usize]) -> (Vec<usize>, u64) {
    let mut seeds = vec![greedy(inst, d), baseline.to_vec()];
    seeds.push(baseline.iter().rev().copied().collect());
    let mut nodes = 0;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mut s in seeds {
        nodes += descend(inst, d, &mut s);
        let c = objective(inst, d, &s);
        if best.as_ref().is_none_or(|(b, _)| c < *b) {
            best = Some((c, s));
        }
    }
    (best.expect("at least one seed").1, nodes)
}

/// Valid lower bound on Σ p_i t_i over all visit orders: the larger of
/// (a) each waypoint reached no earlier than its direct flight from the
/// base, and (b) the k-th visit arriving no earlier than the k cheapest
/// incoming legs combined, paired with masses in decreasing order.
pub fn lower_bound(inst: &Instance) -> f64 {
    let n = inst.len();
    let v = inst.speed;
    let direct: f64 = (0..n).map(|i| inst.masses[i] * inst.dist(None, Some(i)) / v).sum();
    let mut min_in: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| inst.dist(Some(j), Some(i)))
                .fold(inst.dist(None, Some(i)), f64::min)
                / v
        })
        .collect();
    min_in.sort_by(f64::total_cmp);
    let mut masses = inst.masses.clone();
    masses.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut sorted = 0.0;
    for (m, e) in masses.iter().zip(&min_in) {
        prefix += e;
        sorted += m * prefix;
    }
    direct.max(sorted)
}

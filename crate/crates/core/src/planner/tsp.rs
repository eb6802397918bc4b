//! Closed tours from the base: Held-Karp when small, nearest neighbour plus
//! 2-opt and segment relocation otherwise.

use super::{exact, DistTable, Instance};

/// Returns (order, nodes explored, proven optimal).
pub(crate) fn solve(inst: &Instance, exact_limit: usize) -> (Vec<usize>, u64, bool) {
    let d = DistTable::new(inst);
    if inst.len() <= exact_limit {
        let (order, nodes) = exact::tour(inst, &d);
        return (canonical(order), nodes, true);
    }
    let order = heuristic_tour(inst, &d);
    let nodes = (order.len() * order.len()) as u64;
    (order, nodes, false)
}

/// Both directions of a closed tour have equal length; report the
/// lexicographically smaller one.
fn canonical(order: Vec<usize>) -> Vec<usize> {
    let rev: Vec<usize> = order.iter().rev().copied().collect();
    if rev < order {
        rev
    } else {
        order
    }
}

fn closed_length(d: &DistTable, order: &[usize]) -> f64 {
    match (order.first(), order.last()) {
        (Some(&a), Some(&z)) => d.bw(a) + order.windows(2).map(|w| d.ww(w[0], w[1])).sum::<f64>() + d.bw(z),
        _ => 0.0,
    }
}

/// Distance between tour positions, where positions -1 and n are the base.
fn node_dist(d: &DistTable, order: &[usize], a: isize, b: isize) -> f64 {
    let n = order.len() as isize;
    let at = |p: isize| if p < 0 || p >= n { None } else { Some(order[p as usize]) };
    match (at(a), at(b)) {
        (None, None) => 0.0,
        (None, Some(j)) | (Some(j), None) => d.bw(j),
        (Some(i), Some(j)) => d.ww(i, j),
    }
}

pub(crate) fn heuristic_tour(inst: &Instance, d: &DistTable) -> Vec<usize> {
    let n = inst.len();
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut cur: Option<usize> = None;
    for _ in 0..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for k in (0..n).filter(|&k| !used[k]) {
            let dk = cur.map_or(d.bw(k), |c| d.ww(c, k));
            if dk < best.0 {
                best = (dk, k);
            }
        }
        used[best.1] = true;
        order.push(best.1);
        cur = Some(best.1);
    }
    improve(d, &mut order);
    canonical(order)
}

fn improve(d: &DistTable, order: &mut Vec<usize>) {
    let n = order.len() as isize;
    let tol = 1e-12 * closed_length(d, order).max(1.0);
    let mut changed = true;
    while changed {
        changed = false;
        // 2-opt: reverse positions i..=j.
        for i in 0..n {
            for j in i + 1..n {
                let before = node_dist(d, order, i - 1, i) + node_dist(d, order, j, j + 1);
                let after = node_dist(d, order, i - 1, j) + node_dist(d, order, i, j + 1);
                if after < before - tol {
                    order[i as usize..=j as usize].reverse();
                    changed = true;
                }
            }
        }
        // Relocate a run of up to three waypoints.
        for len in 1..=3isize {
            let mut i = 0;
            while i + len <= n {
                let removed = node_dist(d, order, i - 1, i) + node_dist(d, order, i + len - 1, i + len)
                    - node_dist(d, order, i - 1, i + len);
                let seg: Vec<usize> = order[i as usize..(i + len) as usize].to_vec();
                let mut rest: Vec<usize> = order[..i as usize].to_vec();
                rest.extend_from_slice(&order[(i + len) as usize..]);
                let mut best: Option<(f64, usize, bool)> = None;
                for gap in 0..=rest.len() {
                    if gap == i as usize {
                        continue;
                    }
                    let a = if gap == 0 { None } else { Some(rest[gap - 1]) };
                    let b = rest.get(gap).copied();
                    let dd = |x: Option<usize>, y: usize| x.map_or(d.bw(y), |x| d.ww(x, y));
                    let base_ab = match (a, b) {
                        (None, None) => 0.0,
                        (Some(x), None) | (None, Some(x)) => d.bw(x),
                        (Some(x), Some(y)) => d.ww(x, y),
                    };
                    let (s0, s1) = (seg[0], seg[seg.len() - 1]);
                    let fwd = dd(a, s0) + b.map_or(d.bw(s1), |y| d.ww(s1, y)) - base_ab;
                    let bwd = dd(a, s1) + b.map_or(d.bw(s0), |y| d.ww(s0, y)) - base_ab;
                    for (added, flip) in [(fwd, false), (bwd, true)] {
                        if added < removed - tol && best.is_none_or(|(c, _, _)| added < c) {
                            best = Some((added, gap, flip));
                        }
                    }
                }
                if let Some((_, gap, flip)) = best {
                    let mut seg = seg;
                    if flip {
                        seg.reverse();
                    }
                    rest.splice(gap..gap, seg);
                    *order = rest;
                    changed = true;
                }
                i += 1;
            }
        }
    }
}

/// Minimum spanning tree weight over the base and waypoints; no closed
/// tour is shorter.
pub(crate) fn lower_bound(inst: &Instance) -> f64 {
    let nodes: Vec<_> = std::iter::once(inst.base).chain(inst.points.iter().copied()).collect();
    let m = nodes.len();
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..m {
        let (mut u, mut bu) = (usize::MAX, f64::INFINITY);
        for v in 0..m {
            if !in_tree[v] && best[v] < bu {
                bu = best[v];
                u = v;
            }
        }
        in_tree[u] = true;
        total += bu;
        for v in 0..m {
            if !in_tree[v] {
                best[v] = best[v].min(nodes[u].dist(nodes[v]));
            }
        }
    }
    total
}

//! Exhaustive subset dynamic programs.

use super::{DistTable, Instance};

/// Minimum Σ p_i t_i by cost-to-go over unvisited sets:
/// f(S, j) = min_{k∈S} [ (d_jk / v) · Σ_{m∈S} p_m + f(S∖{k}, k) ].
/// Equal costs fall back to the shorter remaining closed tour (so the
/// return leg and any zero-mass tail stay short), then to the lower index.
pub(crate) fn min_latency(inst: &Instance, d: &DistTable) -> (Vec<usize>, u64) {
    let n = inst.len();
    let full = (1usize << n) - 1;
    let stride = n + 1;
    let base = n;
    let mut mass = vec![0.0f64; full + 1];
    for s in 1..=full {
        let low = s.trailing_zeros() as usize;
        mass[s] = mass[s & (s - 1)] + inst.masses[low];
    }
    let mut cost = vec![f64::INFINITY; (full + 1) * stride];
    let mut tail = vec![f64::INFINITY; (full + 1) * stride];
    let mut next = vec![u8::MAX; (full + 1) * stride];
    for j in 0..n {
        cost[j] = 0.0;
        tail[j] = d.bw(j);
    }
    let mut nodes = 0u64;
    for s in 1..=full {
        let scale = mass[s] / inst.speed;
        for j in 0..=n {
            if j == base && s != full || j < n && s & (1 << j) != 0 {
                continue;
            }
            let (mut best_c, mut best_t, mut best_k) = (f64::INFINITY, f64::INFINITY, u8::MAX);
            let mut rest = s;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let leg = if j == base { d.bw(k) } else { d.ww(j, k) };
                let sub = (s & !(1 << k)) * stride + k;
                let c = leg * scale + cost[sub];
                let t = leg + tail[sub];
                nodes += 1;
                if c < best_c || c == best_c && t < best_t {
                    best_c = c;
                    best_t = t;
                    best_k = k as u8;
                }
            }
            cost[s * stride + j] = best_c;
            tail[s * stride + j] = best_t;
            next[s * stride + j] = best_k;
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut s, mut j) = (full, base);
    while s != 0 {
        let k = next[s * stride + j] as usize;
        order.push(k);
        s &= !(1 << k);
        j = k;
    }
    (order, nodes)
}

/// Held-Karp: shortest closed tour base → all waypoints → base.
pub(crate) fn tour(inst: &Instance, d: &DistTable) -> (Vec<usize>, u64) {
    let n = inst.len();
    let full = (1usize << n) - 1;
    // len[S][j]: shortest path from the base through S ending at j ∈ S.
    let mut len = vec![f64::INFINITY; (full + 1) * n];
    let mut prev = vec![u8::MAX; (full + 1) * n];
    for j in 0..n {
        len[(1 << j) * n + j] = d.bw(j);
    }
    let mut nodes = 0u64;
    for s in 1..=full {
        if s.count_ones() < 2 {
            continue;
        }
        let mut ends = s;
        while ends != 0 {
            let j = ends.trailing_zeros() as usize;
            ends &= ends - 1;
            let r = s & !(1 << j);
            let mut best = (f64::INFINITY, u8::MAX);
            let mut from = r;
            while from != 0 {
                let k = from.trailing_zeros() as usize;
                from &= from - 1;
                let c = len[r * n + k] + d.ww(k, j);
                nodes += 1;
                if c < best.0 {
                    best = (c, k as u8);
                }
            }
            len[s * n + j] = best.0;
            prev[s * n + j] = best.1;
        }
    }
    let mut last = 0;
    let mut best = f64::INFINITY;
    for j in 0..n {
        let c = len[full * n + j] + d.bw(j);
        if c < best {
            best = c;
            last = j;
        }
    }
    let mut order = Vec::with_capacity(n);
    let (mut s, mut j) = (full, last);
    loop {
        order.push(j);
        let p = prev[s * n + j];
        s &= !(1 << j);
        if p == u8::MAX {
            break;
        }
        j = p as usize;
    }
    order.reverse();
    (order, nodes)
}

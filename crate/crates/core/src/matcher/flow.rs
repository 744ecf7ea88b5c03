//! Exact degree-constrained matching by successive shortest paths.
//!
//! Network: source → probe `i` (capacity `r_i`), probe `i` → gallery `j`
//! (capacity 1, cost `-s_ij`), gallery `j` → sink (capacity `cap`). Arcs are
//! implicit in the current 0/1 assignment, so each Dijkstra pass is
//! `O((N₁+N₂)² + N₁N₂)`. Successive shortest paths yields a min-cost flow for
//! every flow value and the cost is convex in the flow value, so stopping at
//! the first non-improving path gives the best structure over all flow values.

use super::{MatchStructure, SimilarityMatrix};

/// Returns the optimal 0/1 assignment. With `saturate`, keeps augmenting to a
/// maximum flow (min-cost max-flow) instead of stopping at zero profit.
pub(crate) fn max_profit_assignment(
    s: &SimilarityMatrix,
    degrees: &[usize],
    cap: usize,
    saturate: bool,
) -> MatchStructure {
    let (n1, n2) = (s.rows(), s.cols());
    let mut y = MatchStructure::zeros(n1, n2);
    if n1 == 0 || n2 == 0 || cap == 0 {
        return y;
    }
    let scale = s.max_abs().max(1.0);
    let eps = 1e-12 * scale;

    // node ids: source, probes, galleries, sink
    let src = 0;
    let probe = |i: usize| 1 + i;
    let gallery = |j: usize| 1 + n1 + j;
    let sink = 1 + n1 + n2;
    let nodes = n1 + n2 + 2;

    let mut used = vec![0usize; n1];
    let mut load = vec![0usize; n2];
    let mut pot = vec![0.0f64; nodes];
    for j in 0..n2 {
        pot[gallery(j)] = -(0..n1).map(|i| s.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
    }
    pot[sink] = (0..n2).map(|j| pot[gallery(j)]).fold(f64::INFINITY, f64::min);

    let mut dist = vec![f64::INFINITY; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut done = vec![false; nodes];
    loop {
        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        dist[src] = 0.0;
        loop {
            // lowest tentative distance, ties to the lowest node id
            let mut x = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v].is_finite() && (x == usize::MAX || dist[v] < dist[x]) {
                    x = v;
                }
            }
            if x == usize::MAX {
                break;
            }
            done[x] = true;
            let dx = dist[x];
            let relax = |v: usize, cost: f64, dist: &mut Vec<f64>, parent: &mut Vec<usize>| {
                if done[v] {
                    return;
                }
                let nd = dx + (cost + pot[x] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = x;
                }
            };
            if x == src {
                for i in 0..n1 {
                    if used[i] < degrees[i] {
                        relax(probe(i), 0.0, &mut dist, &mut parent);
                    }
                }
            } else if x == sink {
                for j in 0..n2 {
                    if load[j] > 0 {
                        relax(gallery(j), 0.0, &mut dist, &mut parent);
                    }
                }
            } else if x <= n1 {
                let i = x - 1;
                if used[i] > 0 {
                    relax(src, 0.0, &mut dist, &mut parent);
                }
                for j in 0..n2 {
                    if !y.get(i, j) {
                        relax(gallery(j), -s.get(i, j), &mut dist, &mut parent);
                    }
                }
            } else {
                let j = x - 1 - n1;
                for i in 0..n1 {
                    if y.get(i, j) {
                        relax(probe(i), s.get(i, j), &mut dist, &mut parent);
                    }
                }
                if load[j] < cap {
                    relax(sink, 0.0, &mut dist, &mut parent);
                }
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let path_cost = dist[sink] + pot[sink] - pot[src];
        if !saturate && path_cost >= -eps {
            break;
        }

        // augment one unit along the parent chain
        let mut v = sink;
        while v != src {
            let u = parent[v];
            match (u, v) {
                (u, v) if u == src => used[v - 1] += 1,
                (u, v) if v == src => used[u - 1] -= 1,
                (u, v) if v == sink => load[u - 1 - n1] += 1,
                (u, v) if u == sink => load[v - 1 - n1] -= 1,
                (u, v) if u <= n1 => y.set(u - 1, v - 1 - n1, true),
                (u, v) => y.set(v - 1, u - 1 - n1, false),
            }
            v = u;
        }

        let reach = dist.iter().copied().filter(|d| d.is_finite()).fold(0.0f64, f64::max);
        for (p, &d) in pot.iter_mut().zip(&dist) {
            *p += if d.is_finite() { d } else { reach };
        }
    }
    y
}

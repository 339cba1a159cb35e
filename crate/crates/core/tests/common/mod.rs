#![allow(dead_code)]

use rand::Rng;

use citecast::graph::{Edge, NodeId, NodeKind, NodeRef, PaperGraph, Relation, Snapshot};
use citecast::params::{ParamId, ParamStore};

/// Random heterogeneous snapshot with ids laid out kind by kind, plus its edges.
pub fn random_snapshot(rng: &mut impl Rng, counts: [usize; 4], edge_prob: f64) -> (Snapshot, Vec<Edge>) {
    let mut nodes = Vec::new();
    let mut next = 0i64;
    let mut by_kind: [Vec<NodeRef>; 4] = Default::default();
    for kind in NodeKind::ALL {
        for _ in 0..counts[kind.index()] {
            let n = NodeRef::new(next, kind);
            next += 1;
            nodes.push(n);
            by_kind[kind.index()].push(n);
        }
    }
    let mut edges = Vec::new();
    for rel in Relation::ALL {
        let (s, t) = rel.endpoints();
        for &a in &by_kind[s.index()] {
            for &b in &by_kind[t.index()] {
                if a != b && rng.random::<f64>() < edge_prob {
                    edges.push(Edge::new(a, b, rel, 2000).unwrap());
                }
            }
        }
    }
    (Snapshot::new(2000, nodes, edges.clone()).unwrap(), edges)
}

/// Erdos-Renyi paper graph; isolated nodes are possible.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> PaperGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    PaperGraph::from_edges((0..n as i64).map(NodeId).collect(), edges)
}

/// Dense PPR by power iteration on `pi = alpha e_s + (1 - alpha) pi P`, where
/// a node without neighbours keeps its walker.
pub fn ppr_power_iteration(adj: &[Vec<f64>], alpha: f64, iters: usize) -> Vec<Vec<f64>> {
    let n = adj.len();
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut pi = vec![0.0; n];
        pi[s] = 1.0;
        for _ in 0..iters {
            let mut next = vec![0.0; n];
            next[s] += alpha;
            for i in 0..n {
                let deg: f64 = adj[i].iter().sum();
                if deg == 0.0 {
                    next[i] += (1.0 - alpha) * pi[i];
                } else {
                    for j in 0..n {
                        next[j] += (1.0 - alpha) * pi[i] * adj[i][j] / deg;
                    }
                }
            }
            pi = next;
        }
        out.push(pi);
    }
    out
}

/// `(param, flat index)` pairs spread round-robin over parameter tensors.
pub fn sample_scalars(store: &ParamStore, ids: &[ParamId], count: usize, rng: &mut impl Rng) -> Vec<(ParamId, usize)> {
    (0..count)
        .map(|i| {
            let id = ids[i % ids.len()];
            (id, rng.random_range(0..store.value(id).len()))
        })
        .collect()
}

/// Five-point central difference of `f` with respect to one scalar.
pub fn numeric_grad(store: &mut ParamStore, id: ParamId, idx: usize, h: f64, f: &mut impl FnMut(&ParamStore) -> f64) -> f64 {
    let x0 = store.value(id).data()[idx];
    let mut at = |dx: f64, store: &mut ParamStore| {
        store.value_mut(id).data_mut()[idx] = x0 + dx;
        f(store)
    };
    let (p1, m1, p2, m2) = (at(h, store), at(-h, store), at(2.0 * h, store), at(-2.0 * h, store));
    store.value_mut(id).data_mut()[idx] = x0;
    (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Mean over adjacent year pairs of the mean squared drift of shared ids.
pub fn naive_temporal(years: &[(Vec<i64>, Vec<Vec<f64>>)]) -> f64 {
    let mut total = 0.0;
    for t in 1..years.len() {
        let (ids_a, a) = &years[t - 1];
        let (ids_b, b) = &years[t];
        let mut sum = 0.0;
        let mut n = 0;
        for (i, id) in ids_a.iter().enumerate() {
            for (j, jd) in ids_b.iter().enumerate() {
                if id == jd {
                    n += 1;
                    for c in 0..a[i].len() {
                        sum += (a[i][c] - b[j][c]).powi(2);
                    }
                }
            }
        }
        if n > 0 {
            total += sum / n as f64;
        }
    }
    total / (years.len() - 1) as f64
}

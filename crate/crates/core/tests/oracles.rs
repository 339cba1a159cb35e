mod common;

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use citecast::autodiff::Tape;
use citecast::encoder::{temporal_aligned_loss, temporal_aligned_loss_var, YearEmbeddings};
use citecast::graph::{metapath_subgraph, Edge, MetapathSpec, NodeId, NodeKind, PaperGraph};
use citecast::importance::{attention_score, semantic_fusion, ImportanceConfig, ImportanceEncoder, MetapathInput};
use citecast::imputer::{impute_embedding, NeighborSets};
use citecast::params::ParamStore;
use citecast::ppr::{approx_ppr, exact_ppr, PprConfig};
use citecast::special::leaky_relu;
use citecast::tensor::Tensor;
use citecast::train::{mae, prediction_loss, rmse};

use common::*;

/// Endpoint pairs of every walk following the metapath's kinds, by
/// exhaustive enumeration over the raw edge list.
fn brute_force_pairs(edges: &[Edge], kinds: &[NodeKind]) -> BTreeSet<(NodeId, NodeId)> {
    let mut adj: HashMap<(NodeId, NodeKind), Vec<NodeId>> = HashMap::new();
    for e in edges {
        adj.entry((e.src.id, e.dst.kind)).or_default().push(e.dst.id);
        adj.entry((e.dst.id, e.src.kind)).or_default().push(e.src.id);
    }
    let starts: BTreeSet<NodeId> = edges
        .iter()
        .flat_map(|e| [e.src, e.dst])
        .filter(|n| n.kind == NodeKind::Paper)
        .map(|n| n.id)
        .collect();
    let mut out = BTreeSet::new();
    for &s in &starts {
        let mut paths = vec![s];
        for &k in &kinds[1..] {
            paths = paths
                .iter()
                .flat_map(|n| adj.get(&(*n, k)).cloned().unwrap_or_default())
                .collect();
        }
        for t in paths {
            if t != s {
                out.insert((s.min(t), s.max(t)));
            }
        }
    }
    out
}

fn graph_pairs(g: &PaperGraph) -> BTreeSet<(NodeId, NodeId)> {
    let mut out = BTreeSet::new();
    for (i, nbrs) in g.adjacency.iter().enumerate() {
        for &j in nbrs {
            let (a, b) = (g.papers[i], g.papers[j]);
            out.insert((a.min(b), a.max(b)));
        }
    }
    out
}

#[test]
fn metapath_subgraphs_match_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let counts = [rng.random_range(2..12), rng.random_range(1..8), rng.random_range(1..4), rng.random_range(1..6)];
        let (snap, edges) = random_snapshot(&mut rng, counts, 0.25);
        for spec in ["PAP", "PVP", "PKP", "PPP", "PAPVP", "PKPAP"] {
            let m = MetapathSpec::parse(spec).unwrap();
            let got = graph_pairs(&metapath_subgraph(&snap, &m));
            let want = brute_force_pairs(&edges, m.kinds());
            assert_eq!(got, want, "trial {trial} metapath {spec}");
        }
    }
}

#[test]
fn exact_ppr_matches_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let n = rng.random_range(2..25);
        let g = random_graph(&mut rng, n, 0.2);
        let dense = g.to_dense();
        let exact = exact_ppr(&dense, 0.15).unwrap();
        let power = ppr_power_iteration(&dense, 0.15, 400);
        for (a, b) in exact.iter().zip(&power) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn approx_ppr_tracks_the_dense_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut rng, 40, 0.08);
    let exact = exact_ppr(&g.to_dense(), 0.15).unwrap();
    let cfg = PprConfig { k: 40, ..PprConfig::default() };
    let rows = approx_ppr(&g, &cfg).unwrap();
    for (i, row) in rows.rows.iter().enumerate() {
        let mut est = vec![0.0; 40];
        for &(j, s) in row {
            est[j] = s;
        }
        let err = est.iter().zip(&exact[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 0.05, "source {i}: {err}");
    }
}

struct DenseLayer {
    w: Tensor,
    at: Tensor,
    an: Tensor,
    pt: Tensor,
    pn: Tensor,
    combine: Tensor,
}

fn dense_layer(store: &ParamStore, m: &str, l: usize) -> DenseLayer {
    let get = |s: &str| store.value(store.find(&format!("importance.{m}.layer{l}.{s}")).unwrap()).clone();
    DenseLayer {
        w: get("weight"),
        at: get("att_target"),
        an: get("att_neighbor"),
        pt: get("ppr_target"),
        pn: get("ppr_neighbor"),
        combine: get("combine"),
    }
}

/// Per-node loops over the literal concatenated score, one head at a time.
/// Returns the final embeddings and the last layer's weights per `(i, j)`.
fn dense_importance(
    layers: &[DenseLayer],
    cfg: &ImportanceConfig,
    g: &PaperGraph,
    ppr: &Tensor,
    x0: &Tensor,
) -> (Vec<Vec<f64>>, Vec<HashMap<usize, Vec<f64>>>) {
    let (d, heads, slope) = (cfg.dim, cfg.heads, cfg.negative_slope);
    let n = g.node_count();
    let mut x: Vec<Vec<f64>> = (0..n).map(|i| x0.row(i).to_vec()).collect();
    let mut weights = Vec::new();
    for layer in layers {
        let in_dim = layer.w.rows();
        let mut next = Vec::with_capacity(n);
        weights = vec![HashMap::new(); n];
        for i in 0..n {
            let mut nbrs = g.adjacency[i].clone();
            if cfg.self_edges {
                nbrs.push(i);
                nbrs.sort();
            }
            let mut concat = vec![0.0; heads * d];
            for h in 0..heads {
                let wh = Tensor::from_vec(in_dim, d, (0..in_dim).flat_map(|r| layer.w.row(r)[h * d..(h + 1) * d].to_vec()).collect());
                let a: Vec<f64> = layer
                    .at
                    .row(h)
                    .iter()
                    .chain(layer.an.row(h))
                    .copied()
                    .chain((0..cfg.k).map(|c| layer.pt.get(c, h)))
                    .chain((0..cfg.k).map(|c| layer.pn.get(c, h)))
                    .collect();
                let scores: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| leaky_relu(attention_score(&x[i], &x[j], ppr.row(i), ppr.row(j), &wh, &a, slope).unwrap(), slope))
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for (jj, &j) in nbrs.iter().enumerate() {
                    let alpha = exps[jj] / total;
                    weights[i].entry(j).or_insert_with(|| vec![0.0; heads])[h] = alpha;
                    for c in 0..d {
                        let wx: f64 = (0..in_dim).map(|r| x[j][r] * wh.get(r, c)).sum();
                        concat[h * d + c] += alpha * wx;
                    }
                }
            }
            let act: Vec<f64> = concat.iter().map(|v| leaky_relu(*v, slope)).collect();
            next.push((0..d).map(|c| (0..heads * d).map(|r| act[r] * layer.combine.get(r, c)).sum()).collect());
        }
        x = next;
    }
    (x, weights)
}

#[test]
fn importance_attention_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for self_edges in [true, false] {
        let cfg = ImportanceConfig {
            input_dim: 5,
            dim: 4,
            heads: 2,
            layers: 2,
            k: 3,
            negative_slope: 0.2,
            self_edges,
        };
        let names = vec!["PAP".to_string(), "PVP".to_string()];
        let mut store = ParamStore::new();
        let enc = ImportanceEncoder::new(cfg.clone(), &names, &mut store, &mut rng).unwrap();
        let graphs = [random_graph(&mut rng, 8, 0.3), random_graph(&mut rng, 8, 0.2)];
        let pprs: Vec<Tensor> = (0..2).map(|_| Tensor::from_vec(8, 3, (0..24).map(|_| rng.random::<f64>()).collect())).collect();
        let x = Tensor::xavier(8, 5, &mut rng);

        let tape = Tape::new();
        let inputs: Vec<MetapathInput> = graphs.iter().zip(&pprs).map(|(graph, ppr)| MetapathInput { graph, ppr }).collect();
        let out = enc.forward(&tape, &store, &inputs, tape.constant(x.clone())).unwrap();

        let mut z_plain = Vec::new();
        for (m, name) in names.iter().enumerate() {
            let layers: Vec<DenseLayer> = (0..2).map(|l| dense_layer(&store, name, l)).collect();
            let (z, w) = dense_importance(&layers, &cfg, &graphs[m], &pprs[m], &x);
            let got = out.z[m].value();
            for i in 0..8 {
                for c in 0..4 {
                    assert!((got.get(i, c) - z[i][c]).abs() < 1e-9, "z[{m}][{i}][{c}]");
                }
            }
            let (edges, att) = &out.attention[m];
            let last = att.last().unwrap().value();
            for e in 0..edges.len() {
                for h in 0..2 {
                    assert!((last.get(e, h) - w[edges.dst[e]][&edges.src[e]][h]).abs() < 1e-9);
                }
            }
            z_plain.push(Tensor::from_rows(&z));
        }

        let (wid, qid) = enc.semantic_params();
        let q = store.value(qid).data().to_vec();
        let (fused, weights) = semantic_fusion(&z_plain, store.value(wid), &q).unwrap();
        assert!(fused.max_abs_diff(&out.fused.value()) < 1e-9);
        for (a, b) in weights.iter().zip(out.weights.value().data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn semantic_fusion_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z: Vec<Tensor> = (0..3).map(|_| Tensor::xavier(5, 4, &mut rng)).collect();
    let w = Tensor::xavier(4, 4, &mut rng);
    let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (fused, weights) = semantic_fusion(&z, &w, &q).unwrap();

    let mut logits = Vec::new();
    for zm in &z {
        let mut acc = 0.0;
        for i in 0..5 {
            for c in 0..4 {
                let t: f64 = (0..4).map(|r| zm.get(i, r) * w.get(r, c)).sum();
                acc += q[c] * t.max(0.0);
            }
        }
        logits.push(acc / 5.0);
    }
    let denom: f64 = logits.iter().map(|l| l.exp()).sum();
    for (m, l) in logits.iter().enumerate() {
        assert!((weights[m] - l.exp() / denom).abs() < 1e-9);
    }
    for i in 0..5 {
        for c in 0..4 {
            let want: f64 = (0..3).map(|m| weights[m] * z[m].get(i, c)).sum();
            assert!((fused.get(i, c) - want).abs() < 1e-9);
        }
    }
}

#[test]
fn temporal_loss_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n_years = rng.random_range(2..5);
        let mut raw = Vec::new();
        for _ in 0..n_years {
            let ids: Vec<i64> = (0..10).filter(|_| rng.random::<f64>() < 0.6).collect();
            let rows: Vec<Vec<f64>> = ids.iter().map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            raw.push((ids, rows));
        }
        let years: Vec<YearEmbeddings> = raw
            .iter()
            .enumerate()
            .map(|(y, (ids, rows))| {
                let table = if rows.is_empty() { Tensor::zeros(0, 3) } else { Tensor::from_rows(rows) };
                YearEmbeddings::new(2000 + y as i32, ids.iter().map(|&i| NodeId(i)).collect(), table)
            })
            .collect();
        let got = temporal_aligned_loss(&years).unwrap();
        assert!((got - naive_temporal(&raw)).abs() < 1e-9);
    }
}

#[test]
fn temporal_loss_on_tape_matches_plain() {
    use citecast::graph::{NodeRef, Snapshot};
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let snaps: Vec<Snapshot> = (0..3)
        .map(|y| Snapshot::new(2000 + y, (0..(6 + 2 * y as i64)).map(NodeRef::paper), []).unwrap())
        .collect();
    let tables: Vec<Tensor> = snaps.iter().map(|s| Tensor::xavier(s.node_count(), 4, &mut rng)).collect();
    let tape = Tape::new();
    let vars: Vec<_> = snaps.iter().zip(&tables).map(|(s, t)| (s, tape.constant(t.clone()))).collect();
    let on_tape = temporal_aligned_loss_var(&tape, &vars, None).unwrap().value().scalar();
    let plain: Vec<YearEmbeddings> = snaps
        .iter()
        .zip(&tables)
        .map(|(s, t)| YearEmbeddings::new(s.year(), s.nodes().iter().map(|n| n.id).collect(), t.clone()))
        .collect();
    assert!((on_tape - temporal_aligned_loss(&plain).unwrap()).abs() < 1e-12);
}

#[test]
fn imputation_matches_naive_mean_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ids: Vec<NodeId> = (0..12).map(NodeId).collect();
    let table = Tensor::xavier(12, 3, &mut rng);
    let emb = YearEmbeddings::new(2001, ids, table.clone());
    let weights: [Tensor; 4] = std::array::from_fn(|_| Tensor::xavier(3, 3, &mut rng));
    for _ in 0..20 {
        let sets: NeighborSets = std::array::from_fn(|_| (0..15).filter(|_| rng.random::<f64>() < 0.3).map(NodeId).collect());
        let got = impute_embedding(&emb, &sets, &weights).unwrap();
        let mut want = vec![0.0; 3];
        let mut any = false;
        for r in 0..4 {
            let seen: Vec<i64> = sets[r].iter().map(|n| n.0).filter(|&i| i < 12).collect();
            if seen.is_empty() {
                continue;
            }
            any = true;
            for c in 0..3 {
                for k in 0..3 {
                    let mean = seen.iter().map(|&i| table.get(i as usize, k)).sum::<f64>() / seen.len() as f64;
                    want[c] += mean * weights[r].get(k, c);
                }
            }
        }
        match got {
            Some(v) => {
                assert!(any);
                for (a, b) in v.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            None => assert!(!any),
        }
    }
}

#[test]
fn losses_and_metrics_match_naive_references() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let b = rng.random_range(1..8);
        let pred: Vec<Vec<f64>> = (0..b).map(|_| (0..5).map(|_| rng.random_range(-1.0..4.0)).collect()).collect();
        let counts: Vec<Vec<u64>> = (0..b).map(|_| (0..5).map(|_| rng.random_range(0..60)).collect()).collect();
        let mut sq = 0.0;
        for i in 0..b {
            for t in 0..5 {
                sq += (pred[i][t] - ((counts[i][t] + 1) as f64).ln()).powi(2);
            }
        }
        assert!((prediction_loss(&pred, &counts).unwrap() - sq / (5 * b) as f64).abs() < 1e-9);

        let flat_p: Vec<f64> = pred.iter().flatten().copied().collect();
        let flat_t: Vec<f64> = counts.iter().flatten().map(|&c| ((c + 1) as f64).ln()).collect();
        let abs: f64 = flat_p.iter().zip(&flat_t).map(|(p, t)| (p - t).abs()).sum::<f64>() / flat_p.len() as f64;
        let rms = (flat_p.iter().zip(&flat_t).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / flat_p.len() as f64).sqrt();
        let m = mae(&flat_p, &flat_t).unwrap();
        let r = rmse(&flat_p, &flat_t).unwrap();
        assert!((m - abs).abs() < 1e-9 && (r - rms).abs() < 1e-9);
        assert!(r >= m);
    }
}

#[test]
fn importance_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = ImportanceConfig {
        input_dim: 3,
        dim: 4,
        heads: 2,
        layers: 2,
        k: 2,
        negative_slope: 0.2,
        self_edges: true,
    };
    let names = vec!["PAP".to_string(), "PKP".to_string()];
    let mut store = ParamStore::new();
    let enc = ImportanceEncoder::new(cfg, &names, &mut store, &mut rng).unwrap();
    let graphs = [random_graph(&mut rng, 6, 0.4), random_graph(&mut rng, 6, 0.3)];
    let pprs: Vec<Tensor> = (0..2).map(|_| Tensor::from_vec(6, 2, (0..12).map(|_| rng.random::<f64>()).collect())).collect();
    let x = Tensor::xavier(6, 3, &mut rng);
    let target = Tensor::xavier(6, 4, &mut rng);

    let mut loss = |store: &ParamStore| {
        let tape = Tape::new();
        let inputs: Vec<MetapathInput> = graphs.iter().zip(&pprs).map(|(graph, ppr)| MetapathInput { graph, ppr }).collect();
        let out = enc.forward(&tape, store, &inputs, tape.constant(x.clone())).unwrap();
        out.fused.sub(tape.constant(target.clone())).square().sum().value().scalar()
    };
    let tape = Tape::new();
    let inputs: Vec<MetapathInput> = graphs.iter().zip(&pprs).map(|(graph, ppr)| MetapathInput { graph, ppr }).collect();
    let out = enc.forward(&tape, &store, &inputs, tape.constant(x.clone())).unwrap();
    let l = out.fused.sub(tape.constant(target.clone())).square().sum();
    let grads = tape.backward(l);
    let analytic: Vec<(citecast::params::ParamId, Tensor)> = grads.params().into_iter().map(|(id, g)| (id, g.clone())).collect();

    let ids: Vec<_> = store.ids().collect();
    for (id, idx) in sample_scalars(&store, &ids, 60, &mut rng) {
        let a = analytic.iter().find(|(p, _)| *p == id).map_or(0.0, |(_, g)| g.data()[idx]);
        let n = numeric_grad(&mut store, id, idx, 1e-4, &mut loss);
        let e = rel_error(a, n, 1e-6);
        assert!(e <= 1e-4, "{}[{idx}]: analytic {a} numeric {n} rel {e}", store.name(id));
    }
}

#[test]
fn monte_carlo_error_shrinks_with_more_walks() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let g = random_graph(&mut rng, 30, 0.1);
    let exact = exact_ppr(&g.to_dense(), 0.15).unwrap();
    let mean_err = |walks: usize| {
        let mut total = 0.0;
        for seed in 0..8 {
            let cfg = PprConfig { k: 30, walks: Some(walks), seed, ..PprConfig::default() };
            let rows = approx_ppr(&g, &cfg).unwrap();
            for (i, row) in rows.rows.iter().enumerate() {
                let mut est = vec![0.0; 30];
                for &(j, v) in row {
                    est[j] = v;
                }
                total += est.iter().zip(&exact[i]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            }
        }
        total / (8 * 30) as f64
    };
    let errs: Vec<f64> = [100, 200, 400, 800, 1600].iter().map(|&w| mean_err(w)).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn curve_head_gradients_match_finite_differences() {
    use citecast::generator::{CurveHead, GeneratorConfig};
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut store = ParamStore::new();
    let head = CurveHead::new(4, GeneratorConfig::default(), &mut store, &mut rng).unwrap();
    let hg = Tensor::xavier(3, 4, &mut rng);
    let hc = Tensor::xavier(3, 4, &mut rng);
    let target = Tensor::xavier(3, 5, &mut rng);
    let mut loss = |store: &ParamStore| {
        let tape = Tape::new();
        let out = head.forward(&tape, store, tape.constant(hg.clone()), tape.constant(hc.clone()));
        out.series.sub(tape.constant(target.clone())).square().sum().value().scalar()
    };
    let tape = Tape::new();
    let out = head.forward(&tape, &store, tape.constant(hg.clone()), tape.constant(hc.clone()));
    let grads = tape.backward(out.series.sub(tape.constant(target.clone())).square().sum());
    let analytic: Vec<(citecast::params::ParamId, Tensor)> = grads.params().into_iter().map(|(id, g)| (id, g.clone())).collect();
    let ids: Vec<_> = store.ids().collect();
    for (id, idx) in sample_scalars(&store, &ids, 40, &mut rng) {
        let a = analytic.iter().find(|(p, _)| *p == id).map_or(0.0, |(_, g)| g.data()[idx]);
        let n = numeric_grad(&mut store, id, idx, 1e-4, &mut loss);
        assert!(rel_error(a, n, 1e-6) <= 1e-4, "{}[{idx}]: {a} vs {n}", store.name(id));
    }
}

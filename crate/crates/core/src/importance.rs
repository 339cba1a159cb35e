//! Importance embeddings from PPR-augmented attention on metapath subgraphs.
//!
//! Per metapath and head the raw score of neighbour `j` for target `i` is
//!
//! ```text
//! e_ij = a . leaky([W h_i | W h_j | ppr_i | ppr_j])
//! ```
//!
//! which splits into four per-node terms because the activation is
//! elementwise. Weights are a softmax over `leaky(e_ij)` among the neighbours
//! of `i`, `z_i = leaky(sum_j att_ij W h_j)`, and heads are concatenated then
//! projected back to `dim`. Metapaths are fused with a learned softmax
//! weighting shared by all papers of the snapshot.

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_rows, EdgeList, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::PaperGraph;
use crate::params::{ParamId, ParamStore};
use crate::special::leaky_relu;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub input_dim: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    /// Length of the PPR feature.
    pub k: usize,
    pub negative_slope: f64,
    /// Let every paper attend to itself.
    pub self_edges: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            dim: 32,
            heads: 4,
            layers: 2,
            k: 32,
            negative_slope: 0.2,
            self_edges: true,
        }
    }
}

/// `a . leaky(W h_i | W h_j | ppr_i | ppr_j)` evaluated literally.
/// `w` maps row vectors (`h W`), `a` has length `2 * dim + 2 * k`.
pub fn attention_score(h_i: &[f64], h_j: &[f64], ppr_i: &[f64], ppr_j: &[f64], w: &Tensor, a: &[f64], slope: f64) -> Result<f64> {
    if h_i.len() != w.rows() || h_j.len() != w.rows() {
        return Err(Error::DimensionMismatch(format!("features of width {} and {} for W with {} rows", h_i.len(), h_j.len(), w.rows())));
    }
    if ppr_i.len() != ppr_j.len() || a.len() != 2 * w.cols() + 2 * ppr_i.len() {
        return Err(Error::DimensionMismatch(format!(
            "attention vector has length {}, expected {}",
            a.len(),
            2 * w.cols() + 2 * ppr_i.len()
        )));
    }
    let wi = Tensor::row_vector(h_i.to_vec()).matmul(w);
    let wj = Tensor::row_vector(h_j.to_vec()).matmul(w);
    let concat: Vec<f64> = wi.data().iter().chain(wj.data()).chain(ppr_i).chain(ppr_j).copied().collect();
    Ok(concat.iter().zip(a).map(|(x, c)| c * leaky_relu(*x, slope)).sum())
}

/// Target `i` receives from neighbour `j`: edges run `j -> i`.
pub fn attention_edges(graph: &PaperGraph, self_edges: bool) -> EdgeList {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (i, nbrs) in graph.adjacency.iter().enumerate() {
        let mut list = nbrs.clone();
        if self_edges {
            list.push(i);
            list.sort_unstable();
        }
        for j in list {
            src.push(j);
            dst.push(i);
        }
    }
    EdgeList::new(src, dst)
}

#[derive(Debug, Clone)]
struct GatLayer {
    w: ParamId,
    att_target: ParamId,
    att_neighbor: ParamId,
    ppr_target: ParamId,
    ppr_neighbor: ParamId,
    combine: ParamId,
}

#[derive(Debug, Clone)]
pub struct ImportanceEncoder {
    cfg: ImportanceConfig,
    metapaths: Vec<String>,
    layers: Vec<Vec<GatLayer>>,
    semantic_w: ParamId,
    semantic_q: ParamId,
}

/// One metapath's subgraph with its PPR feature matrix (`n x k`, rows in
/// `graph.papers` order).
pub struct MetapathInput<'a> {
    pub graph: &'a PaperGraph,
    pub ppr: &'a Tensor,
}

pub struct ImportanceOutput<'t> {
    /// Per metapath `n x dim`.
    pub z: Vec<Var<'t>>,
    /// Fused `n x dim`.
    pub fused: Var<'t>,
    /// Semantic weights, `P x 1`.
    pub weights: Var<'t>,
    /// Per metapath: attention edges and per-layer `E x heads` weights.
    pub attention: Vec<(Rc<EdgeList>, Vec<Var<'t>>)>,
}

impl ImportanceEncoder {
    pub fn new(cfg: ImportanceConfig, metapaths: &[String], store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        if metapaths.is_empty() {
            return Err(Error::InvalidConfig("at least one metapath is required".into()));
        }
        if cfg.dim == 0 || cfg.heads == 0 || cfg.layers == 0 || cfg.k == 0 {
            return Err(Error::InvalidConfig("importance widths, heads, layers and k must be positive".into()));
        }
        let (d, h, k) = (cfg.dim, cfg.heads, cfg.k);
        let layers = metapaths
            .iter()
            .map(|m| {
                (0..cfg.layers)
                    .map(|l| {
                        let in_dim = if l == 0 { cfg.input_dim } else { d };
                        let p = format!("importance.{m}.layer{l}");
                        GatLayer {
                            w: store.add(format!("{p}.weight"), Tensor::xavier(in_dim, h * d, rng)),
                            att_target: store.add(format!("{p}.att_target"), Tensor::xavier(h, d, rng)),
                            att_neighbor: store.add(format!("{p}.att_neighbor"), Tensor::xavier(h, d, rng)),
                            ppr_target: store.add(format!("{p}.ppr_target"), Tensor::xavier(k, h, rng)),
                            ppr_neighbor: store.add(format!("{p}.ppr_neighbor"), Tensor::xavier(k, h, rng)),
                            combine: store.add(format!("{p}.combine"), Tensor::xavier(h * d, d, rng)),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            semantic_w: store.add("importance.semantic.weight", Tensor::xavier(d, d, rng)),
            semantic_q: store.add("importance.semantic.query", Tensor::xavier(d, 1, rng)),
            cfg,
            metapaths: metapaths.to_vec(),
            layers,
        })
    }

    pub fn config(&self) -> &ImportanceConfig {
        &self.cfg
    }

    pub fn metapaths(&self) -> &[String] {
        &self.metapaths
    }

    /// Semantic transform `W` and query `q`.
    pub fn semantic_params(&self) -> (ParamId, ParamId) {
        (self.semantic_w, self.semantic_q)
    }

    /// `features` holds one row per paper in the shared `graph.papers` order.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, inputs: &[MetapathInput<'_>], features: Var<'t>) -> Result<ImportanceOutput<'t>> {
        if inputs.len() != self.metapaths.len() {
            return Err(Error::DimensionMismatch(format!("{} metapath inputs for {} metapaths", inputs.len(), self.metapaths.len())));
        }
        let n = features.rows();
        if features.cols() != self.cfg.input_dim {
            return Err(Error::DimensionMismatch(format!("paper features have width {}, expected {}", features.cols(), self.cfg.input_dim)));
        }
        let slope = self.cfg.negative_slope;
        let heads = self.cfg.heads;
        let mut zs = Vec::with_capacity(inputs.len());
        let mut attention = Vec::with_capacity(inputs.len());
        for (input, layers) in inputs.iter().zip(&self.layers) {
            if input.graph.node_count() != n || input.ppr.shape() != (n, self.cfg.k) {
                return Err(Error::DimensionMismatch(format!(
                    "metapath graph has {} papers and PPR {:?}; expected {n} and ({n}, {})",
                    input.graph.node_count(),
                    input.ppr.shape(),
                    self.cfg.k
                )));
            }
            let edges = Rc::new(attention_edges(input.graph, self.cfg.self_edges));
            let src: Rc<[usize]> = edges.src.clone().into();
            let dst: Rc<[usize]> = edges.dst.clone().into();
            let ppr = tape.constant(input.ppr.map(|x| leaky_relu(x, slope)));
            let mut x = features;
            let mut layer_att = Vec::with_capacity(layers.len());
            for layer in layers {
                let p = |id| tape.param(store, id);
                let wx = x.matmul(p(layer.w));
                let act = wx.leaky_relu(slope);
                let target = act.head_dot(p(layer.att_target)).add(ppr.matmul(p(layer.ppr_target)));
                let neighbor = act.head_dot(p(layer.att_neighbor)).add(ppr.matmul(p(layer.ppr_neighbor)));
                let scores = target.gather_rows(dst.clone()).add(neighbor.gather_rows(src.clone()));
                let att = scores.leaky_relu(slope).segment_softmax(dst.clone());
                let z = att.edge_aggregate(wx, edges.clone(), heads, n).leaky_relu(slope);
                x = z.matmul(p(layer.combine));
                layer_att.push(att);
            }
            zs.push(x);
            attention.push((edges, layer_att));
        }

        let sw = tape.param(store, self.semantic_w);
        let sq = tape.param(store, self.semantic_q);
        let logits: Vec<Var<'t>> = zs.iter().map(|z| z.matmul(sw).relu().sum_rows().scale(1.0 / n.max(1) as f64).matmul(sq)).collect();
        let weights = concat_rows(&logits).segment_softmax(vec![0; zs.len()].into());
        let mut fused = zs[0].mul_scalar(weights.slice_rows(0, 1));
        for (m, z) in zs.iter().enumerate().skip(1) {
            fused = fused.add(z.mul_scalar(weights.slice_rows(m, 1)));
        }
        Ok(ImportanceOutput {
            z: zs,
            fused,
            weights,
            attention,
        })
    }
}

/// Direct semantic fusion of plain per-metapath embeddings:
/// `w_m = q . mean_i relu(z_i W)`, weights `softmax(w)`, `h = sum_m weight_m z_m`.
pub fn semantic_fusion(z: &[Tensor], w: &Tensor, q: &[f64]) -> Result<(Tensor, Vec<f64>)> {
    let first = z.first().ok_or_else(|| Error::EmptyInput("semantic fusion needs a metapath".into()))?;
    if z.iter().any(|t| t.shape() != first.shape()) || w.shape() != (first.cols(), q.len()) {
        return Err(Error::DimensionMismatch("semantic fusion inputs disagree".into()));
    }
    let n = first.rows();
    let logits: Vec<f64> = z
        .iter()
        .map(|zm| {
            let t = zm.matmul(w).map(|v| v.max(0.0));
            (0..q.len()).map(|c| q[c] * (0..n).map(|i| t.get(i, c)).sum::<f64>() / n.max(1) as f64).sum()
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut fused = Tensor::zeros(first.rows(), first.cols());
    for (zm, &wt) in z.iter().zip(&weights) {
        fused.add_assign(&zm.scale(wt));
    }
    Ok((fused, weights))
}

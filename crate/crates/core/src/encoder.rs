//! Type-aware multi-head attention over one snapshot, shared across years.
//!
//! Each node kind owns a query projection and an output mixer; each relation
//! owns key/value projections for both directions, so every relation carries
//! messages both ways. A layer is
//!
//! ```text
//! x   = layer_norm(h)
//! att = softmax over all incoming edges of <K_r x_src, Q_t x_dst> / sqrt(d_head)
//! h'  = h + gelu(sum_r att * V_r x_src) A_t
//! ```
//!
//! A node without neighbours therefore keeps its input projection unchanged.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_rows, EdgeList, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeKind, Relation, Snapshot};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 32,
            dim: 32,
            heads: 4,
            layers: 2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.input_dim == 0 {
            return Err(Error::InvalidConfig("encoder widths and heads must be positive".into()));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "heads ({}) must divide dim ({})",
                self.heads, self.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layer {
    query: [ParamId; 4],
    key: [[ParamId; 2]; 4],
    value: [[ParamId; 2]; 4],
    mix: [ParamId; 4],
}

#[derive(Debug, Clone)]
pub struct HeteroEncoder {
    cfg: EncoderConfig,
    input: [(ParamId, ParamId); 4],
    layers: Vec<Layer>,
}

const DIRECTIONS: [&str; 2] = ["fwd", "rev"];

impl HeteroEncoder {
    /// Register parameters under `encoder.*`.
    pub fn new(cfg: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let input = NodeKind::ALL.map(|k| {
            (
                store.add(format!("encoder.input.{}.weight", k.name()), Tensor::xavier(cfg.input_dim, d, rng)),
                store.add(format!("encoder.input.{}.bias", k.name()), Tensor::zeros(1, d)),
            )
        });
        let layers = (0..cfg.layers)
            .map(|l| {
                let mut add = |name: String| store.add(format!("encoder.layer{l}.{name}"), Tensor::xavier(d, d, rng));
                Layer {
                    query: NodeKind::ALL.map(|k| add(format!("query.{}", k.name()))),
                    key: Relation::ALL.map(|r| DIRECTIONS.map(|dir| add(format!("key.{}.{dir}", r.name())))),
                    value: Relation::ALL.map(|r| DIRECTIONS.map(|dir| add(format!("value.{}.{dir}", r.name())))),
                    mix: NodeKind::ALL.map(|k| add(format!("mix.{}", k.name()))),
                }
            })
            .collect();
        Ok(Self { cfg, input, layers })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Encode a snapshot. `features` holds one row per snapshot node in local
    /// order; the output uses the same order.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, snapshot: &Snapshot, features: Var<'t>) -> Result<Var<'t>> {
        let n = snapshot.node_count();
        if features.shape() != (n, self.cfg.input_dim) {
            return Err(Error::DimensionMismatch(format!(
                "snapshot features are {:?}, expected ({n}, {})",
                features.shape(),
                self.cfg.input_dim
            )));
        }
        if n == 0 {
            return Err(Error::EmptyInput(format!("snapshot {}", snapshot.year())));
        }

        let mut blocks: [Option<Var<'t>>; 4] = [None; 4];
        for kind in NodeKind::ALL {
            let members = snapshot.kind_members(kind);
            if members.is_empty() {
                continue;
            }
            let (w, b) = self.input[kind.index()];
            let x = features.gather_rows(members.into());
            blocks[kind.index()] = Some(x.matmul(tape.param(store, w)).add_row(tape.param(store, b)));
        }

        // (relation, direction, source kind, target kind, edges in kind positions)
        let mut messages = Vec::new();
        for rel in Relation::ALL {
            let pairs = snapshot.edges(rel);
            if pairs.is_empty() {
                continue;
            }
            let (s_kind, t_kind) = rel.endpoints();
            let src: Vec<usize> = pairs.iter().map(|&(s, _)| snapshot.kind_position(s)).collect();
            let dst: Vec<usize> = pairs.iter().map(|&(_, t)| snapshot.kind_position(t)).collect();
            messages.push((rel, 0, s_kind, t_kind, Rc::new(EdgeList::new(src.clone(), dst.clone()))));
            messages.push((rel, 1, t_kind, s_kind, Rc::new(EdgeList::new(dst, src))));
        }

        let heads = self.cfg.heads;
        let inv_sqrt = 1.0 / ((self.cfg.dim / heads) as f64).sqrt();
        for layer in &self.layers {
            let normed: [Option<Var<'t>>; 4] = blocks.map(|b| b.map(|h| h.layer_norm(1e-5)));
            let mut next = blocks;
            for target in NodeKind::ALL {
                let Some(xt) = normed[target.index()] else { continue };
                let incoming: Vec<_> = messages.iter().filter(|m| m.3 == target).collect();
                if incoming.is_empty() {
                    continue;
                }
                let q = xt.matmul(tape.param(store, layer.query[target.index()]));
                let mut scores = Vec::with_capacity(incoming.len());
                let mut values = Vec::with_capacity(incoming.len());
                let mut segments = Vec::new();
                for (rel, dir, s_kind, _, edges) in incoming.iter().copied() {
                    let xs = normed[s_kind.index()].expect("edge source kind present");
                    let k = xs.matmul(tape.param(store, layer.key[rel.index()][*dir]));
                    values.push(xs.matmul(tape.param(store, layer.value[rel.index()][*dir])));
                    scores.push(k.edge_dot(q, edges.clone(), heads).scale(inv_sqrt));
                    segments.extend_from_slice(&edges.dst);
                }
                let weights = concat_rows(&scores).segment_softmax(segments.into());
                let n_t = xt.rows();
                let mut offset = 0;
                let mut agg: Option<Var<'t>> = None;
                for ((_, _, _, _, edges), v) in incoming.iter().zip(values) {
                    let w = weights.slice_rows(offset, edges.len());
                    offset += edges.len();
                    let part = w.edge_aggregate(v, edges.clone(), heads, n_t);
                    agg = Some(agg.map_or(part, |a| a.add(part)));
                }
                let update = agg.expect("nonempty").gelu().matmul(tape.param(store, layer.mix[target.index()]));
                next[target.index()] = Some(blocks[target.index()].expect("present").add(update));
            }
            blocks = next;
        }

        let mut offsets = [0usize; 4];
        let mut parts = Vec::new();
        let mut acc = 0;
        for kind in NodeKind::ALL {
            offsets[kind.index()] = acc;
            if let Some(b) = blocks[kind.index()] {
                acc += b.rows();
                parts.push(b);
            }
        }
        let perm: Vec<usize> = (0..n)
            .map(|i| offsets[snapshot.node(i).kind.index()] + snapshot.kind_position(i))
            .collect();
        Ok(concat_rows(&parts).gather_rows(perm.into()))
    }
}

/// Per-year node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct YearEmbeddings {
    pub year: i32,
    pub ids: Vec<NodeId>,
    pub table: Tensor,
    index: HashMap<NodeId, usize>,
}

impl YearEmbeddings {
    pub fn new(year: i32, ids: Vec<NodeId>, table: Tensor) -> Self {
        assert_eq!(ids.len(), table.rows(), "one row per node");
        let index = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Self { year, ids, table, index }
    }

    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.index.get(&id).map(|&i| self.table.row(i))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }
}

/// Forward-only snapshot encoding.
pub fn encode_snapshot(encoder: &HeteroEncoder, store: &ParamStore, snapshot: &Snapshot, features: &Tensor) -> Result<YearEmbeddings> {
    let tape = Tape::new();
    let out = encoder.forward(&tape, store, snapshot, tape.constant(features.clone()))?;
    let ids = snapshot.nodes().iter().map(|n| n.id).collect();
    Ok(YearEmbeddings::new(snapshot.year(), ids, (*out.value()).clone()))
}

/// Mean over adjacent year pairs of the mean squared embedding drift of
/// shared nodes. A pair with no shared nodes contributes zero.
pub fn temporal_aligned_loss(years: &[YearEmbeddings]) -> Result<f64> {
    if years.len() < 2 {
        return Err(Error::EmptyInput("temporal loss needs at least two years".into()));
    }
    let mut total = 0.0;
    for pair in years.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let mut sum = 0.0;
        let mut shared = 0usize;
        for (i, id) in a.ids.iter().enumerate() {
            if let Some(rb) = b.get(*id) {
                shared += 1;
                sum += a.table.row(i).iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        }
        if shared > 0 {
            total += sum / shared as f64;
        }
    }
    Ok(total / (years.len() - 1) as f64)
}

/// Differentiable temporal loss over consecutive encoded snapshots,
/// optionally restricted to a node subset.
pub fn temporal_aligned_loss_var<'t>(tape: &'t Tape, years: &[(&Snapshot, Var<'t>)], only: Option<&HashSet<NodeId>>) -> Result<Var<'t>> {
    if years.len() < 2 {
        return Err(Error::EmptyInput("temporal loss needs at least two years".into()));
    }
    let mut total: Option<Var<'t>> = None;
    for pair in years.windows(2) {
        let (sa, ha) = pair[0];
        let (sb, hb) = pair[1];
        let mut ia = Vec::new();
        let mut ib = Vec::new();
        for (i, node) in sa.nodes().iter().enumerate() {
            if only.is_some_and(|set| !set.contains(&node.id)) {
                continue;
            }
            if let Some(j) = sb.local(node.id) {
                ia.push(i);
                ib.push(j);
            }
        }
        if ia.is_empty() {
            continue;
        }
        let count = ia.len() as f64;
        let diff = ha.gather_rows(ia.into()).sub(hb.gather_rows(ib.into()));
        let term = diff.square().sum().scale(1.0 / count);
        total = Some(total.map_or(term, |t| t.add(term)));
    }
    let scale = 1.0 / (years.len() - 1) as f64;
    Ok(total.map_or_else(|| tape.scalar(0.0), |t| t.scale(scale)))
}

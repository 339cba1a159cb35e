//! Pre-publication embeddings for new papers and their recurrent encoding.
//!
//! A paper has no node of its own before it is published, so for each earlier
//! year its embedding is imputed from its metadata neighbours (authors, venue,
//! keywords, references as seen in the publication year):
//!
//! ```text
//! v_t = sum_r mean_{i in N_r(p) observed in year t} h_i^t W_r
//! ```
//!
//! Years where no neighbour is observed are skipped. The resulting sequence is
//! fed to a stacked GRU (or LSTM); its final top-layer state is the trend
//! vector of the paper.

use std::collections::BTreeSet;
use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{concat_rows, SparseRows, Tape, Var};
use crate::encoder::YearEmbeddings;
use crate::error::{Error, Result};
use crate::graph::{DynamicNetwork, NodeId, NodeRef, Relation, Snapshot};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Per-relation metadata neighbours of a paper.
pub type NeighborSets = [BTreeSet<NodeId>; 4];

pub fn neighbor_sets(snapshot: &Snapshot, paper: NodeRef) -> Result<NeighborSets> {
    let mut out: NeighborSets = Default::default();
    for r in Relation::ALL {
        out[r.index()] = snapshot.neighbor_set(paper, r)?;
    }
    Ok(out)
}

/// Imputed embedding for one year, or `None` when no neighbour is observed.
pub fn impute_embedding(embeddings: &YearEmbeddings, neighbors: &NeighborSets, weights: &[Tensor; 4]) -> Result<Option<Vec<f64>>> {
    let dim = embeddings.table.cols();
    let mut out = vec![0.0; dim];
    let mut any = false;
    for r in Relation::ALL {
        let w = &weights[r.index()];
        if w.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!("W_{} is {:?}, expected ({dim}, {dim})", r.name(), w.shape())));
        }
        let rows: Vec<&[f64]> = neighbors[r.index()].iter().filter_map(|&id| embeddings.get(id)).collect();
        if rows.is_empty() {
            continue;
        }
        any = true;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, x) in mean.iter_mut().zip(*row) {
                *m += x;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        for (c, o) in out.iter_mut().enumerate() {
            *o += (0..dim).map(|k| mean[k] * inv * w.get(k, c)).sum::<f64>();
        }
    }
    Ok(any.then_some(out))
}

/// Which neighbours are visible in which year for one paper.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub paper: NodeRef,
    pub pub_year: i32,
    /// Ascending years, each with the neighbours observed in that year.
    pub steps: Vec<(i32, NeighborSets)>,
}

impl TrajectoryPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.steps.iter().map(|(y, _)| *y)
    }
}

/// Plan the imputed sequence of `paper` over the `window` years before its
/// publication. Returns `None` when no neighbour is observed in any of them.
pub fn plan_trajectory(network: &DynamicNetwork, paper: NodeId, window: usize) -> Result<Option<TrajectoryPlan>> {
    let node = network.node(paper).ok_or_else(|| Error::InvalidDataset(format!("unknown paper {paper}")))?;
    let pub_year = network.first_seen(paper).expect("known node");
    let snapshot = network
        .snapshot(pub_year)
        .ok_or_else(|| Error::InvalidDataset(format!("no snapshot for year {pub_year}")))?;
    let all = neighbor_sets(snapshot, node)?;
    let start = (pub_year - window as i32).max(network.first_year());
    let mut steps = Vec::new();
    for year in start..pub_year {
        let s = network.snapshot(year).expect("year within range");
        let seen: NeighborSets = std::array::from_fn(|r| all[r].iter().copied().filter(|&id| s.contains(id)).collect());
        if seen.iter().any(|set| !set.is_empty()) {
            steps.push((year, seen));
        }
    }
    Ok((!steps.is_empty()).then_some(TrajectoryPlan {
        paper: node,
        pub_year,
        steps,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FakeTrajectory {
    pub paper: NodeRef,
    pub start_year: i32,
    pub years: Vec<i32>,
    pub vectors: Vec<Vec<f64>>,
}

/// Forward-only trajectory for a planned paper. `embeddings` must cover every
/// year in the plan.
pub fn build_trajectory(plan: &TrajectoryPlan, embeddings: &[YearEmbeddings], weights: &[Tensor; 4]) -> Result<FakeTrajectory> {
    let mut years = Vec::new();
    let mut vectors = Vec::new();
    for (year, nbrs) in &plan.steps {
        let emb = embeddings
            .iter()
            .find(|e| e.year == *year)
            .ok_or_else(|| Error::InvalidDataset(format!("no embeddings for year {year}")))?;
        if let Some(v) = impute_embedding(emb, nbrs, weights)? {
            years.push(*year);
            vectors.push(v);
        }
    }
    if years.is_empty() {
        return Err(Error::EmptyInput(format!("trajectory of paper {}", plan.paper.id)));
    }
    Ok(FakeTrajectory {
        paper: plan.paper,
        start_year: years[0],
        years,
        vectors,
    })
}

/// Learnable `W_r`, one per relation, shared over years.
#[derive(Debug, Clone)]
pub struct Imputer {
    weights: [ParamId; 4],
}

impl Imputer {
    pub fn new(dim: usize, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        Self {
            weights: Relation::ALL.map(|r| store.add(format!("imputer.relation.{}", r.name()), Tensor::xavier(dim, dim, rng))),
        }
    }

    pub fn weights(&self, store: &ParamStore) -> [Tensor; 4] {
        self.weights.map(|id| store.value(id).clone())
    }

    /// Right-aligned step inputs for a batch of plans. `years` holds the
    /// encoded snapshots available to the plans. Returns `(inputs, mask)` per
    /// step, `window` steps in total; masked rows are zero.
    pub fn steps<'t>(
        &self,
        tape: &'t Tape,
        store: &ParamStore,
        years: &[(&Snapshot, Var<'t>)],
        plans: &[&TrajectoryPlan],
        window: usize,
    ) -> Result<Vec<(Var<'t>, Var<'t>)>> {
        if years.is_empty() {
            return Err(Error::EmptyInput("no encoded years for imputation".into()));
        }
        let mut offsets = Vec::with_capacity(years.len());
        let mut total = 0;
        for (s, h) in years {
            offsets.push(total);
            total += h.rows();
            debug_assert_eq!(h.rows(), s.node_count());
        }
        let stacked = concat_rows(&years.iter().map(|(_, h)| *h).collect::<Vec<_>>());
        let weights = self.weights.map(|id| tape.param(store, id));

        let mut out = Vec::with_capacity(window);
        for step in 0..window {
            let mut rows: [Vec<Vec<(usize, f64)>>; 4] = Default::default();
            let mut mask = Vec::with_capacity(plans.len());
            for plan in plans {
                if plan.len() > window {
                    return Err(Error::InvalidConfig(format!("plan longer than window {window}")));
                }
                let pad = window - plan.len();
                let entry = (step >= pad).then(|| &plan.steps[step - pad]);
                mask.push(if entry.is_some() { 1.0 } else { 0.0 });
                for r in 0..4 {
                    let mut row = Vec::new();
                    if let Some((year, nbrs)) = entry {
                        let yi = years
                            .iter()
                            .position(|(s, _)| s.year() == *year)
                            .ok_or_else(|| Error::InvalidDataset(format!("year {year} not encoded")))?;
                        let s = years[yi].0;
                        let locals: Vec<usize> = nbrs[r].iter().filter_map(|&id| s.local(id)).collect();
                        let w = 1.0 / locals.len().max(1) as f64;
                        row.extend(locals.into_iter().map(|l| (offsets[yi] + l, w)));
                    }
                    rows[r].push(row);
                }
            }
            let mut x: Option<Var<'t>> = None;
            for (r, rel_rows) in rows.into_iter().enumerate() {
                if rel_rows.iter().all(Vec::is_empty) {
                    continue;
                }
                let mean = stacked.spmm(Rc::new(SparseRows::new(total, rel_rows)));
                let term = mean.matmul(weights[r]);
                x = Some(x.map_or(term, |acc| acc.add(term)));
            }
            let dim = stacked.cols();
            let x = x.unwrap_or_else(|| tape.constant(Tensor::zeros(plans.len(), dim)));
            out.push((x, tape.constant(Tensor::column_vector(mask))));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryConfig {
    pub cell: CellKind,
    pub hidden: usize,
    pub layers: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            cell: CellKind::Gru,
            hidden: 32,
            layers: 3,
        }
    }
}

#[derive(Debug, Clone)]
struct Gate {
    input: ParamId,
    hidden: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct TrajectoryEncoder {
    cfg: TrajectoryConfig,
    /// GRU: update, reset, candidate. LSTM: input, forget, cell, output.
    layers: Vec<Vec<Gate>>,
}

impl TrajectoryEncoder {
    pub fn new(input_dim: usize, cfg: TrajectoryConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        if cfg.hidden == 0 || cfg.layers == 0 {
            return Err(Error::InvalidConfig("trajectory encoder needs positive hidden width and layers".into()));
        }
        let names: &[&str] = match cfg.cell {
            CellKind::Gru => &["update", "reset", "candidate"],
            CellKind::Lstm => &["input", "forget", "cell", "output"],
        };
        let h = cfg.hidden;
        let layers = (0..cfg.layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { h };
                names
                    .iter()
                    .map(|g| {
                        let p = format!("trajectory_encoder.layer{l}.{g}");
                        // Forget gates start open.
                        let bias = if *g == "forget" { Tensor::filled(1, h, 1.0) } else { Tensor::zeros(1, h) };
                        Gate {
                            input: store.add(format!("{p}.input"), Tensor::xavier(in_dim, h, rng)),
                            hidden: store.add(format!("{p}.hidden"), Tensor::xavier(h, h, rng)),
                            bias: store.add(format!("{p}.bias"), bias),
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { cfg, layers })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    /// Run the stacked cell over right-aligned `(inputs, mask)` steps; masked
    /// rows keep their state. Returns the last top-layer hidden state.
    pub fn forward<'t>(&self, tape: &'t Tape, store: &ParamStore, steps: &[(Var<'t>, Var<'t>)]) -> Result<Var<'t>> {
        let Some((first, _)) = steps.first() else {
            return Err(Error::EmptyInput("trajectory".into()));
        };
        let batch = first.rows();
        let h_dim = self.cfg.hidden;
        let mut seq: Vec<Var<'t>> = steps.iter().map(|(x, _)| *x).collect();
        for gates in &self.layers {
            let bound: Vec<(Var<'t>, Var<'t>, Var<'t>)> = gates
                .iter()
                .map(|g| (tape.param(store, g.input), tape.param(store, g.hidden), tape.param(store, g.bias)))
                .collect();
            let pre = |x: Var<'t>, h: Var<'t>, i: usize| x.matmul(bound[i].0).add(h.matmul(bound[i].1)).add_row(bound[i].2);
            let mut h = tape.constant(Tensor::zeros(batch, h_dim));
            let mut c = tape.constant(Tensor::zeros(batch, h_dim));
            let mut outputs = Vec::with_capacity(seq.len());
            for (x, (_, mask)) in seq.iter().zip(steps) {
                let (h_new, c_new) = match self.cfg.cell {
                    CellKind::Gru => {
                        let z = pre(*x, h, 0).sigmoid();
                        let r = pre(*x, h, 1).sigmoid();
                        let n = x
                            .matmul(bound[2].0)
                            .add(r.mul(h).matmul(bound[2].1))
                            .add_row(bound[2].2)
                            .tanh();
                        (z.one_minus().mul(n).add(z.mul(h)), c)
                    }
                    CellKind::Lstm => {
                        let i = pre(*x, h, 0).sigmoid();
                        let f = pre(*x, h, 1).sigmoid();
                        let g = pre(*x, h, 2).tanh();
                        let o = pre(*x, h, 3).sigmoid();
                        let c_new = f.mul(c).add(i.mul(g));
                        (o.mul(c_new.tanh()), c_new)
                    }
                };
                h = h.add(h_new.sub(h).mul_col(*mask));
                if self.cfg.cell == CellKind::Lstm {
                    c = c.add(c_new.sub(c).mul_col(*mask));
                }
                outputs.push(h);
            }
            seq = outputs;
        }
        Ok(*seq.last().expect("nonempty"))
    }
}

/// Forward-only encoding of one trajectory.
pub fn encode_trajectory(encoder: &TrajectoryEncoder, store: &ParamStore, traj: &FakeTrajectory) -> Result<Vec<f64>> {
    if traj.vectors.is_empty() {
        return Err(Error::EmptyInput("trajectory".into()));
    }
    let tape = Tape::new();
    let steps: Vec<_> = traj
        .vectors
        .iter()
        .map(|v| (tape.constant(Tensor::row_vector(v.clone())), tape.constant(Tensor::filled(1, 1, 1.0))))
        .collect();
    let out = encoder.forward(&tape, store, &steps)?;
    let v = out.value();
    Ok(v.data().to_vec())
}

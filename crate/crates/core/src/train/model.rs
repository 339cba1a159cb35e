use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::autodiff::{concat_rows, Tape, Var};
use crate::encoder::HeteroEncoder;
use crate::error::{Error, Result};
use crate::generator::{CurveHead, CurveParams};
use crate::graph::{metapath_subgraph, DynamicNetwork, MetapathSpec, NodeId, PaperGraph, Snapshot};
use crate::importance::{ImportanceEncoder, MetapathInput};
use crate::imputer::{plan_trajectory, Imputer, TrajectoryEncoder, TrajectoryPlan};
use crate::params::{ParamId, ParamStore};
use crate::ppr::{approx_ppr, cached_approx_ppr, PprConfig};
use crate::tensor::Tensor;

/// Metapath subgraphs and PPR features of one snapshot.
#[derive(Debug, Clone)]
pub struct YearInputs {
    pub papers: Vec<NodeId>,
    pub graphs: Vec<PaperGraph>,
    pub ppr: Vec<Tensor>,
}

/// Data-dependent inputs derived once per network: trajectory plans and the
/// per-year importance inputs.
pub struct Context<'a> {
    network: &'a DynamicNetwork,
    metapaths: Vec<MetapathSpec>,
    ppr: PprConfig,
    window: usize,
    cache_dir: Option<PathBuf>,
    years: HashMap<i32, YearInputs>,
    plans: HashMap<NodeId, Option<TrajectoryPlan>>,
}

impl<'a> Context<'a> {
    pub fn new(network: &'a DynamicNetwork, config: &Config) -> Self {
        Self {
            network,
            metapaths: config.metapath_specs(),
            ppr: config.ppr.clone(),
            window: config.train.history_window,
            cache_dir: None,
            years: HashMap::new(),
            plans: HashMap::new(),
        }
    }

    /// Store PPR rows as JSON files under `dir` and reuse them across runs.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn network(&self) -> &'a DynamicNetwork {
        self.network
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn snapshot(&self, year: i32) -> Result<&'a Snapshot> {
        self.network
            .snapshot(year)
            .ok_or_else(|| Error::InvalidDataset(format!("no snapshot for year {year}")))
    }

    pub fn prepare_year(&mut self, year: i32) -> Result<&YearInputs> {
        if !self.years.contains_key(&year) {
            let s = self.snapshot(year)?;
            let mut graphs = Vec::new();
            let mut ppr = Vec::new();
            for m in &self.metapaths {
                let g = metapath_subgraph(s, m);
                let rows = match &self.cache_dir {
                    Some(dir) => cached_approx_ppr(dir, year, m.name(), &g, &self.ppr)?,
                    None => approx_ppr(&g, &self.ppr)?,
                };
                ppr.push(rows.feature_matrix(self.ppr.k));
                graphs.push(g);
            }
            let papers = graphs[0].papers.clone();
            log::debug!("prepared importance inputs for {year}: {} papers", papers.len());
            self.years.insert(year, YearInputs { papers, graphs, ppr });
        }
        Ok(&self.years[&year])
    }

    pub fn year_inputs(&self, year: i32) -> Option<&YearInputs> {
        self.years.get(&year)
    }

    /// Cached plan; `None` for papers whose metadata is never observed earlier.
    pub fn plan(&mut self, paper: NodeId) -> Result<Option<&TrajectoryPlan>> {
        if !self.plans.contains_key(&paper) {
            let plan = plan_trajectory(self.network, paper, self.window)?;
            self.plans.insert(paper, plan);
        }
        Ok(self.plans[&paper].as_ref())
    }

    /// Plans and importance inputs for `papers`; returns the trainable subset
    /// in input order and the untrainable rest.
    pub fn prepare(&mut self, papers: &[NodeId]) -> Result<(Vec<NodeId>, Vec<NodeId>)> {
        let mut ok = Vec::new();
        let mut skipped = Vec::new();
        for &p in papers {
            match self.plan(p)? {
                Some(plan) => {
                    let year = plan.pub_year;
                    self.prepare_year(year)?;
                    ok.push(p);
                }
                None => skipped.push(p),
            }
        }
        if !skipped.is_empty() {
            log::info!("{} papers have no observed metadata history and are excluded", skipped.len());
        }
        Ok((ok, skipped))
    }

    fn cached_plan(&self, paper: NodeId) -> Result<&TrajectoryPlan> {
        self.plans
            .get(&paper)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::InvalidDataset(format!("paper {paper} has no prepared trajectory")))
    }
}

/// Differentiable outputs for a batch of papers.
pub struct BatchOutput<'t> {
    pub papers: Vec<NodeId>,
    /// `B x L` predicted log cumulative counts.
    pub series: Var<'t>,
    pub time_loss: Var<'t>,
    pub trend_weight: Var<'t>,
    pub mu: Var<'t>,
    pub sigma: Var<'t>,
    pub eta: Var<'t>,
    /// `h_g` and `h_c`, both `B x dim`.
    pub trend: Var<'t>,
    pub importance: Var<'t>,
    /// Per publication year, `P x 1` semantic weights.
    pub semantic_weights: BTreeMap<i32, Var<'t>>,
    /// Every snapshot year read while building this output.
    pub years_used: BTreeSet<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub paper: NodeId,
    pub pub_year: i32,
    pub series: Vec<f64>,
    pub params: CurveParams,
    pub trend_weight: f64,
    pub trend: Vec<f64>,
    pub importance: Vec<f64>,
}

pub struct Model {
    pub config: Config,
    pub store: ParamStore,
    node_ids: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    features: ParamId,
    encoder: HeteroEncoder,
    imputer: Imputer,
    trajectory: TrajectoryEncoder,
    importance: ImportanceEncoder,
    head: CurveHead,
}

impl Model {
    /// Fresh parameters for a network's node set. Initialisation depends only
    /// on `(config, node_ids, config.train.seed)`.
    pub fn new(config: Config, node_ids: Vec<NodeId>) -> Result<Self> {
        let config = config.resolve()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        let mut store = ParamStore::new();
        let features = store.add("encoder.node_features", Tensor::xavier(node_ids.len().max(1), config.feature_dim, &mut rng));
        let encoder = HeteroEncoder::new(config.encoder.clone(), &mut store, &mut rng)?;
        let imputer = Imputer::new(config.dim, &mut store, &mut rng);
        let trajectory = TrajectoryEncoder::new(config.dim, config.trajectory.clone(), &mut store, &mut rng)?;
        let importance = ImportanceEncoder::new(config.importance.clone(), &config.metapaths, &mut store, &mut rng)?;
        let head = CurveHead::new(config.dim, config.generator.clone(), &mut store, &mut rng)?;
        let index = node_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        Ok(Self {
            config,
            store,
            node_ids,
            index,
            features,
            encoder,
            imputer,
            trajectory,
            importance,
            head,
        })
    }

    pub fn for_network(config: Config, network: &DynamicNetwork) -> Result<Self> {
        Self::new(config, network.nodes().iter().map(|n| n.id).collect())
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn head(&self) -> &CurveHead {
        &self.head
    }

    pub fn importance_encoder(&self) -> &ImportanceEncoder {
        &self.importance
    }

    fn rows_for(&self, ids: impl Iterator<Item = NodeId>) -> Result<Rc<[usize]>> {
        ids.map(|id| {
            self.index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::InvalidDataset(format!("node {id} has no feature row in this model")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Into::into)
    }

    /// Forward pass for papers already prepared in `ctx`.
    pub fn forward<'t>(&self, tape: &'t Tape, ctx: &Context<'_>, papers: &[NodeId]) -> Result<BatchOutput<'t>> {
        if papers.is_empty() {
            return Err(Error::EmptyInput("batch".into()));
        }
        let plans: Vec<&TrajectoryPlan> = papers.iter().map(|&p| ctx.cached_plan(p)).collect::<Result<_>>()?;
        let table = tape.param(&self.store, self.features);
        let mut years_used = BTreeSet::new();

        // Trend: encode every year any plan reads, as a contiguous range.
        let first = plans.iter().flat_map(|p| p.years()).min().expect("plans are nonempty");
        let last = plans.iter().flat_map(|p| p.years()).max().expect("plans are nonempty");
        let mut encoded: Vec<(&Snapshot, Var<'t>)> = Vec::new();
        for year in first..=last {
            let s = ctx.snapshot(year)?;
            let x = table.gather_rows(self.rows_for(s.nodes().iter().map(|n| n.id))?);
            encoded.push((s, self.encoder.forward(tape, &self.store, s, x)?));
            years_used.insert(year);
        }
        let time_loss = if encoded.len() >= 2 {
            let induced: HashSet<NodeId> = plans
                .iter()
                .flat_map(|p| p.steps.iter().flat_map(|(_, sets)| sets.iter().flatten().copied()))
                .collect();
            crate::encoder::temporal_aligned_loss_var(tape, &encoded, Some(&induced))?
        } else {
            tape.scalar(0.0)
        };
        let steps = self.imputer.steps(tape, &self.store, &encoded, &plans, ctx.window())?;
        let trend = self.trajectory.forward(tape, &self.store, &steps)?;

        // Importance: one pass per publication year present in the batch.
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (b, plan) in plans.iter().enumerate() {
            by_year.entry(plan.pub_year).or_default().push(b);
        }
        let mut blocks = Vec::new();
        let mut order = vec![0usize; papers.len()];
        let mut semantic_weights = BTreeMap::new();
        let mut offset = 0;
        for (&year, members) in &by_year {
            let inputs = ctx
                .year_inputs(year)
                .ok_or_else(|| Error::InvalidDataset(format!("importance inputs for {year} were not prepared")))?;
            years_used.insert(year);
            let x = table.gather_rows(self.rows_for(inputs.papers.iter().copied())?);
            let mp: Vec<MetapathInput<'_>> = inputs
                .graphs
                .iter()
                .zip(&inputs.ppr)
                .map(|(graph, ppr)| MetapathInput { graph, ppr })
                .collect();
            let out = self.importance.forward(tape, &self.store, &mp, x)?;
            let rows: Vec<usize> = members
                .iter()
                .map(|&b| {
                    inputs
                        .papers
                        .binary_search(&papers[b])
                        .map_err(|_| Error::InvalidDataset(format!("paper {} missing from its {year} snapshot", papers[b])))
                })
                .collect::<Result<_>>()?;
            for (k, &b) in members.iter().enumerate() {
                order[b] = offset + k;
            }
            offset += rows.len();
            blocks.push(out.fused.gather_rows(rows.into()));
            semantic_weights.insert(year, out.weights);
        }
        let importance = concat_rows(&blocks).gather_rows(order.into());

        let curve = self.head.forward(tape, &self.store, trend, importance);
        Ok(BatchOutput {
            papers: papers.to_vec(),
            series: curve.series,
            time_loss,
            trend_weight: curve.trend_weight,
            mu: curve.mu,
            sigma: curve.sigma,
            eta: curve.eta,
            trend,
            importance,
            semantic_weights,
            years_used,
        })
    }

    /// `(total, prediction, temporal)` losses against `B x L` log targets.
    pub fn loss<'t>(&self, tape: &'t Tape, ctx: &Context<'_>, papers: &[NodeId], targets: &Tensor) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        let out = self.forward(tape, ctx, papers)?;
        if out.series.shape() != targets.shape() {
            return Err(Error::DimensionMismatch(format!("targets {:?} for predictions {:?}", targets.shape(), out.series.shape())));
        }
        let pred = out.series.sub(tape.constant(targets.clone())).square().mean();
        let total = pred.add(out.time_loss.scale(self.config.train.beta_time));
        Ok((total, pred, out.time_loss))
    }

    /// Forward-only predictions in chunks of the configured batch size.
    pub fn predict(&self, ctx: &Context<'_>, papers: &[NodeId]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(papers.len());
        for chunk in papers.chunks(self.config.train.batch_size.max(1)) {
            let tape = Tape::new();
            let b = self.forward(&tape, ctx, chunk)?;
            let series = b.series.value();
            let (mu, sigma, eta, tw) = (b.mu.value(), b.sigma.value(), b.eta.value(), b.trend_weight.value());
            let (trend, imp) = (b.trend.value(), b.importance.value());
            for (i, &paper) in chunk.iter().enumerate() {
                out.push(Prediction {
                    paper,
                    pub_year: ctx.cached_plan(paper)?.pub_year,
                    series: series.row(i).to_vec(),
                    params: CurveParams {
                        mu: mu.get(i, 0),
                        sigma: sigma.get(i, 0),
                        eta: eta.get(i, 0),
                    },
                    trend_weight: tw.get(i, 0),
                    trend: trend.row(i).to_vec(),
                    importance: imp.row(i).to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Semantic weights per metapath for the papers of `year`.
    pub fn semantic_weights(&self, ctx: &Context<'_>, year: i32) -> Result<Vec<f64>> {
        let inputs = ctx
            .year_inputs(year)
            .ok_or_else(|| Error::InvalidDataset(format!("importance inputs for {year} were not prepared")))?;
        let tape = Tape::new();
        let table = tape.param(&self.store, self.features);
        let x = table.gather_rows(self.rows_for(inputs.papers.iter().copied())?);
        let mp: Vec<MetapathInput<'_>> = inputs
            .graphs
            .iter()
            .zip(&inputs.ppr)
            .map(|(graph, ppr)| MetapathInput { graph, ppr })
            .collect();
        let out = self.importance.forward(&tape, &self.store, &mp, x)?;
        let w = out.weights.value();
        Ok(w.data().to_vec())
    }

    /// Restore a model from saved parameter segments.
    pub fn from_segments(config: Config, node_ids: Vec<NodeId>, segments: &BTreeMap<String, BTreeMap<String, Tensor>>) -> Result<Self> {
        let mut model = Self::new(config, node_ids)?;
        model.store.load_segments(segments).map_err(Error::Checkpoint)?;
        Ok(model)
    }
}

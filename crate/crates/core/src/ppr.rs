//! Personalized PageRank over paper graphs.
//!
//! The exact solver is a dense resolvent and only meant for small graphs and
//! tests. The Monte Carlo estimator runs `ceil(c * ln n / eps^2)` walks per
//! source; each walk stops with probability `alpha` at every step and the
//! estimate for `j` is the fraction of walks that stop at `j`.
//!
//! Nodes without neighbours behave as if they had a self-loop.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, PaperGraph};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PprConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub k: usize,
    pub walk_constant: f64,
    /// Fixed walk count per source, bypassing the budget formula.
    pub walks: Option<usize>,
    pub seed: u64,
}

impl Default for PprConfig {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            epsilon: 0.05,
            k: 32,
            walk_constant: 16.0,
            walks: None,
            seed: 0,
        }
    }
}

impl PprConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.walk_constant > 0.0 && self.walk_constant.is_finite()) {
            return bad(format!("walk constant must be positive, got {}", self.walk_constant));
        }
        if self.walks == Some(0) {
            return bad("zero walk budget".into());
        }
        Ok(())
    }

    /// Walks per source for a graph of `n` nodes.
    pub fn walk_count(&self, n: usize) -> usize {
        if let Some(w) = self.walks {
            return w;
        }
        let n = n.max(2) as f64;
        (self.walk_constant * n.ln() / (self.epsilon * self.epsilon)).ceil() as usize
    }
}

/// `alpha (I - (1 - alpha) D^-1 A)^-1` for a dense nonnegative adjacency.
pub fn exact_ppr(adjacency: &[Vec<f64>], alpha: f64) -> Result<Vec<Vec<f64>>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = adjacency.len();
    if n == 0 {
        return Err(Error::EmptyInput("adjacency matrix".into()));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != n {
            return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::InvalidDataset(format!("row {i} has a negative or non-finite weight")));
        }
        let deg: f64 = row.iter().sum();
        if deg == 0.0 {
            m[(i, i)] -= 1.0 - alpha;
        } else {
            for (j, &a) in row.iter().enumerate() {
                m[(i, j)] -= (1.0 - alpha) * a / deg;
            }
        }
    }
    let inv = m.try_inverse().ok_or(Error::Singular)?;
    Ok((0..n).map(|i| (0..n).map(|j| alpha * inv[(i, j)]).collect()).collect())
}

/// Walk-termination counts from one source as `(node, count)` pairs,
/// ascending by node.
pub fn walk_counts(graph: &PaperGraph, source: usize, walks: usize, alpha: f64, rng: &mut impl Rng) -> Vec<(usize, u32)> {
    let mut counts = vec![0u32; graph.node_count()];
    let mut touched = Vec::new();
    // One draw per step: high half decides the restart, low half picks the
    // neighbour by multiply-shift (bias below deg / 2^32).
    let restart = (alpha * 4_294_967_296.0).ceil() as u64;
    for _ in 0..walks {
        let mut u = source;
        loop {
            let x = rng.next_u64();
            if x >> 32 < restart {
                break;
            }
            let nbrs = &graph.adjacency[u];
            if !nbrs.is_empty() {
                u = nbrs[((x & 0xFFFF_FFFF) * nbrs.len() as u64 >> 32) as usize];
            }
        }
        if counts[u] == 0 {
            touched.push(u);
        }
        counts[u] += 1;
    }
    touched.sort_unstable();
    touched.into_iter().map(|u| (u, counts[u])).collect()
}

fn source_seed(seed: u64, source: usize) -> u64 {
    seed ^ (source as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Top-k truncated PPR rows for every node of a paper graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PprRows {
    pub k: usize,
    pub papers: Vec<NodeId>,
    /// Per source: `(target index, score)`, scores descending, ties by index.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl PprRows {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Descending top-`k` scores of a node, zero-padded. Unknown nodes give zeros.
    pub fn feature(&self, id: NodeId, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k];
        if let Ok(i) = self.papers.binary_search(&id) {
            for (o, &(_, s)) in out.iter_mut().zip(&self.rows[i]) {
                *o = s;
            }
        }
        out
    }

    /// `n x k` matrix of [`PprRows::feature`] rows in `papers` order.
    pub fn feature_matrix(&self, k: usize) -> Tensor {
        let mut out = Tensor::zeros(self.rows.len(), k);
        for (i, row) in self.rows.iter().enumerate() {
            for (c, &(_, s)) in row.iter().take(k).enumerate() {
                out.set(i, c, s);
            }
        }
        out
    }
}

/// Keep the `k` largest entries, descending, ties broken by smaller index.
pub fn truncate_top_k(mut entries: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.truncate(k);
    entries
}

pub fn approx_ppr(graph: &PaperGraph, cfg: &PprConfig) -> Result<PprRows> {
    cfg.validate()?;
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::EmptyInput("paper graph".into()));
    }
    let walks = cfg.walk_count(n);
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(source_seed(cfg.seed, i));
            let counts = walk_counts(graph, i, walks, cfg.alpha, &mut rng);
            let entries = counts.into_iter().map(|(j, c)| (j, c as f64 / walks as f64)).collect();
            truncate_top_k(entries, cfg.k)
        })
        .collect();
    Ok(PprRows {
        k: cfg.k,
        papers: graph.papers.clone(),
        rows,
    })
}

/// Cache location for one `(year, metapath, alpha, k, epsilon, seed)` tuple.
pub fn cache_path(dir: &Path, year: i32, metapath: &str, cfg: &PprConfig) -> PathBuf {
    let walks = cfg.walks.map(|w| format!("_w{w}")).unwrap_or_default();
    dir.join(format!(
        "ppr_{year}_{metapath}_a{}_k{}_e{}_c{}{walks}_s{}.json",
        cfg.alpha, cfg.k, cfg.epsilon, cfg.walk_constant, cfg.seed
    ))
}

/// Read cached rows if present and matching `graph`, otherwise compute and
/// store them.
pub fn cached_approx_ppr(dir: &Path, year: i32, metapath: &str, graph: &PaperGraph, cfg: &PprConfig) -> Result<PprRows> {
    let path = cache_path(dir, year, metapath, cfg);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(rows) = serde_json::from_str::<PprRows>(&text) {
            if rows.papers == graph.papers {
                return Ok(rows);
            }
        }
        log::warn!("ignoring stale PPR cache {}", path.display());
    }
    let rows = approx_ppr(graph, cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fs::write(&path, serde_json::to_string(&rows)?).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

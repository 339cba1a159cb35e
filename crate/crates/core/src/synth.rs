//! Seeded synthetic academic networks with planted citation curves.
//!
//! Every author, venue and keyword carries a latent quality drawn from a
//! standard normal. A paper's quality is mostly its venue's, shifted by its
//! keywords and, weakly, its authors. Curve parameters are fixed functions of
//! that quality, so the series is predictable from the graph. Metadata is attached by
//! preferential attachment, which gives the usual long-tailed degrees.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{cumulative_citations, CurveParams};
use crate::graph::{ingest, CitationRecord, Dataset, NodeId, NodeKind, NodeRecord, Relation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_papers: usize,
    pub n_authors: usize,
    pub n_venues: usize,
    pub n_keywords: usize,
    pub first_year: i32,
    pub last_year: i32,
    /// Attachment weight is `(degree + 1) ^ exponent`.
    pub pa_exponent: f64,
    /// Standard deviation of the multiplicative noise on the logged curve.
    pub noise: f64,
    /// Years of ground truth recorded per paper.
    pub horizon: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_papers: 500,
            n_authors: 400,
            n_venues: 12,
            n_keywords: 60,
            first_year: 2000,
            last_year: 2010,
            pa_exponent: 1.0,
            noise: 0.05,
            horizon: 5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_papers", self.n_papers),
            ("n_authors", self.n_authors),
            ("n_venues", self.n_venues),
            ("n_keywords", self.n_keywords),
            ("horizon", self.horizon),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self.last_year < self.first_year {
            return Err(Error::InvalidConfig(format!("year span {}..{} is empty", self.first_year, self.last_year)));
        }
        if !(self.pa_exponent.is_finite() && self.pa_exponent >= 0.0) {
            return Err(Error::InvalidConfig(format!("pa_exponent must be nonnegative, got {}", self.pa_exponent)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise must be nonnegative, got {}", self.noise)));
        }
        Ok(())
    }

    fn years(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }
}

/// A generated dataset and the curve parameters planted for each paper.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub planted: BTreeMap<NodeId, CurveParams>,
}

/// Fitness ceiling; the logged curve saturates at `e^eta - 1`, about 11.2.
pub const MAX_PLANTED_ETA: f64 = 2.5;

/// Planted parameters for a paper of latent quality `q`.
pub fn planted_params(q: f64) -> CurveParams {
    CurveParams {
        mu: 1.2 - 0.3 * q,
        sigma: 0.9,
        eta: (0.35 * (1.1 * q).exp()).min(MAX_PLANTED_ETA),
    }
}

/// Raw cumulative counts `round(exp(c_t) - 1)` for `t = 1..=horizon`, where
/// `c_t` is the planted logged curve scaled by log-normal noise. Kept
/// nondecreasing.
pub fn planted_counts(p: &CurveParams, horizon: usize, noise: f64, rng: &mut impl Rng) -> Vec<u64> {
    let mut out = Vec::with_capacity(horizon);
    let mut prev = 0u64;
    for t in 1..=horizon as i64 {
        let c = cumulative_citations(p, 1.0, t).expect("t >= 1");
        let z: f64 = StandardNormal.sample(rng);
        let noisy = c * (noise * z - 0.5 * noise * noise).exp();
        let raw = (noisy.exp() - 1.0).round().max(0.0) as u64;
        prev = prev.max(raw);
        out.push(prev);
    }
    out
}

struct Pool {
    ids: Vec<i64>,
    quality: Vec<f64>,
    degree: Vec<usize>,
    /// Members that have been attached at least once.
    active: Vec<usize>,
}

impl Pool {
    /// Qualities are standardised so small pools keep a unit spread.
    fn new(first_id: i64, n: usize, rng: &mut impl Rng) -> Self {
        let mut quality: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if n > 1 {
            let mean = quality.iter().sum::<f64>() / n as f64;
            let sd = (quality.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            quality.iter_mut().for_each(|q| *q = (*q - mean) / sd);
        }
        Self {
            ids: (0..n as i64).map(|i| first_id + i).collect(),
            quality,
            degree: vec![0; n],
            active: Vec::new(),
        }
    }

    /// `k` distinct members. Each draw opens a fresh member with probability
    /// `fresh` while any remain, otherwise attaches preferentially.
    fn draw(&mut self, k: usize, fresh: f64, exponent: f64, rng: &mut impl Rng) -> Vec<usize> {
        let mut picked = BTreeSet::new();
        let k = k.min(self.ids.len());
        while picked.len() < k {
            let unopened = self.ids.len() - self.active.len();
            let open = unopened > 0 && (self.active.is_empty() || rng.random::<f64>() < fresh);
            let m = if open {
                let m = self.active.len();
                self.active.push(m);
                m
            } else {
                let w: Vec<f64> = self.active.iter().map(|&m| ((self.degree[m] + 1) as f64).powf(exponent)).collect();
                self.active[WeightedIndex::new(&w).expect("positive weights").sample(rng)]
            };
            picked.insert(m);
        }
        for &m in &picked {
            self.degree[m] += 1;
        }
        picked.into_iter().collect()
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_papers as i64;
    let mut authors = Pool::new(n, spec.n_authors, &mut rng);
    let mut venues = Pool::new(n + spec.n_authors as i64, spec.n_venues, &mut rng);
    let mut keywords = Pool::new(n + (spec.n_authors + spec.n_venues) as i64, spec.n_keywords, &mut rng);
    let years = spec.years();

    let mut nodes = String::new();
    let mut edges = String::new();
    let mut cites = String::new();

    let mut pub_year = Vec::with_capacity(spec.n_papers);
    let mut by_year: BTreeMap<i32, Vec<i64>> = BTreeMap::new();
    let mut planted = BTreeMap::new();
    let mut counts = Vec::with_capacity(spec.n_papers);
    for p in 0..n {
        let year = spec.first_year + (p as usize * years / spec.n_papers) as i32;
        pub_year.push(year);
        by_year.entry(year).or_default().push(p);
        push(&mut nodes, &NodeRecord { id: NodeId(p), kind: NodeKind::Paper, year: Some(year) });

        let n_auth = rng.random_range(1..=3);
        let a = authors.draw(n_auth, 0.25, spec.pa_exponent, &mut rng);
        let v = venues.draw(1, 0.2, spec.pa_exponent, &mut rng);
        let k = keywords.draw(2, 0.25, spec.pa_exponent, &mut rng);
        let mean = |pool: &Pool, ms: &[usize]| ms.iter().map(|&m| pool.quality[m]).sum::<f64>() / ms.len() as f64;
        let z: f64 = StandardNormal.sample(&mut rng);
        let q = 0.9 * mean(&venues, &v) + 0.3 * mean(&keywords, &k) + 0.1 * mean(&authors, &a) + 0.1 * z;
        let params = planted_params(q);
        planted.insert(NodeId(p), params);
        counts.push(planted_counts(&params, spec.horizon, spec.noise, &mut rng));

        for (pool, ms, rel) in [(&authors, &a, Relation::Writes), (&venues, &v, Relation::Publishes), (&keywords, &k, Relation::Contains)] {
            for &m in ms {
                let (src, dst) = match rel {
                    Relation::Writes => (pool.ids[m], p),
                    _ => (p, pool.ids[m]),
                };
                push(&mut edges, &EdgeLine { src, dst, relation: rel, year });
            }
        }
    }

    // Materialise citations that fall inside the observed span.
    for p in 0..n as usize {
        let mut prev = 0;
        for (t, &c) in counts[p].iter().enumerate() {
            let year = pub_year[p] + t as i32 + 1;
            let inc = (c - prev) as usize;
            prev = c;
            let Some(pool) = by_year.get(&year) else { continue };
            for &citer in pool.choose_multiple(&mut rng, inc) {
                push(&mut edges, &EdgeLine { src: citer, dst: p as i64, relation: Relation::Cites, year });
            }
        }
        push(
            &mut cites,
            &CitationRecord {
                paper: NodeId(p as i64),
                pub_year: pub_year[p],
                counts: counts[p].clone(),
            },
        );
    }
    for (pool, kind) in [(&authors, NodeKind::Author), (&venues, NodeKind::Venue), (&keywords, NodeKind::Keyword)] {
        for &m in &pool.active {
            push(&mut nodes, &NodeRecord { id: NodeId(pool.ids[m]), kind, year: None });
        }
    }

    let dataset = ingest(nodes.as_bytes(), edges.as_bytes(), cites.as_bytes())?;
    Ok(Synthetic { dataset, planted })
}

#[derive(Serialize)]
struct EdgeLine {
    src: i64,
    dst: i64,
    relation: Relation,
    year: i32,
}

fn push(buf: &mut String, record: &impl Serialize) {
    buf.push_str(&serde_json::to_string(record).expect("records serialize"));
    buf.push('\n');
}

use std::fmt;
use std::str::FromStr;

use super::{NodeId, NodeKind, Relation, Snapshot};
use crate::error::{Error, Result};

/// A paper-anchored node-kind sequence such as `PAP`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetapathSpec {
    name: String,
    kinds: Vec<NodeKind>,
}

fn kind_letter(c: char) -> Option<NodeKind> {
    match c.to_ascii_uppercase() {
        'P' => Some(NodeKind::Paper),
        'A' => Some(NodeKind::Author),
        'V' => Some(NodeKind::Venue),
        'K' | 'F' => Some(NodeKind::Keyword),
        _ => None,
    }
}

impl MetapathSpec {
    /// Parse a letter string: `P` paper, `A` author, `V` venue, `K` (or `F`) keyword.
    pub fn parse(spec: &str) -> Result<Self> {
        let err = |reason: &str| Error::InvalidMetapath {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let kinds = spec
            .trim()
            .chars()
            .map(|c| kind_letter(c).ok_or_else(|| err(&format!("unknown node kind {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_kinds(spec.trim().to_ascii_uppercase(), kinds).map_err(|e| match e {
            Error::InvalidMetapath { reason, .. } => err(&reason),
            other => other,
        })
    }

    pub fn from_kinds(name: impl Into<String>, kinds: Vec<NodeKind>) -> Result<Self> {
        let name = name.into();
        let err = |reason: String| Error::InvalidMetapath {
            spec: name.clone(),
            reason,
        };
        if kinds.len() < 3 || kinds.len() % 2 == 0 {
            return Err(err(format!("length {} is not an odd number >= 3", kinds.len())));
        }
        if kinds[0] != NodeKind::Paper || kinds[kinds.len() - 1] != NodeKind::Paper {
            return Err(err("must start and end at paper".into()));
        }
        for w in kinds.windows(2) {
            if Relation::between(w[0], w[1]).is_none() {
                return Err(err(format!("no relation joins {} and {}", w[0].name(), w[1].name())));
            }
        }
        Ok(Self { name, kinds })
    }

    /// `PAP`, `PVP`, `PKP`.
    pub fn defaults() -> Vec<MetapathSpec> {
        ["PAP", "PVP", "PKP"].iter().map(|s| Self::parse(s).expect("valid default")).collect()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn relations(&self) -> impl Iterator<Item = Relation> + '_ {
        self.kinds.windows(2).map(|w| Relation::between(w[0], w[1]).expect("validated"))
    }
}

impl fmt::Display for MetapathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for MetapathSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Undirected, unweighted graph over a snapshot's papers.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperGraph {
    /// Paper ids in ascending order; position is the graph index.
    pub papers: Vec<NodeId>,
    /// Sorted neighbour lists, symmetric, no self-loops.
    pub adjacency: Vec<Vec<usize>>,
}

impl PaperGraph {
    pub fn from_edges(papers: Vec<NodeId>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); papers.len()];
        for (a, b) in edges {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self { papers, adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.papers.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.papers.binary_search(&id).ok()
    }

    /// Dense 0/1 adjacency, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.papers.len();
        let mut out = vec![vec![0.0; n]; n];
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                out[i][j] = 1.0;
            }
        }
        out
    }
}

/// Papers `i != j` are adjacent iff an instance of `m` joins them in `s`
/// (in either direction).
pub fn metapath_subgraph(s: &Snapshot, m: &MetapathSpec) -> PaperGraph {
    let papers_local = s.kind_members(NodeKind::Paper);
    let papers: Vec<NodeId> = papers_local.iter().map(|&l| s.node(l).id).collect();
    let relations: Vec<Relation> = m.relations().collect();
    let kinds = m.kinds();

    let mut mark = vec![usize::MAX; s.node_count()];
    let mut stamp = 0;
    let mut edges = Vec::new();
    for (pi, &start) in papers_local.iter().enumerate() {
        let mut frontier = vec![start];
        for (step, &rel) in relations.iter().enumerate() {
            let want = kinds[step + 1];
            stamp += 1;
            let mut next = Vec::new();
            for &u in &frontier {
                for &v in s.neighbors(u, rel) {
                    if s.node(v).kind == want && mark[v] != stamp {
                        mark[v] = stamp;
                        next.push(v);
                    }
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        for v in frontier {
            if v != start {
                edges.push((pi, s.kind_position(v)));
            }
        }
    }
    PaperGraph::from_edges(papers, edges)
}

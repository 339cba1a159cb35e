//! Dynamic heterogeneous academic networks.
//!
//! Four node kinds (paper, author, venue, keyword) joined by four relations.
//! A [`DynamicNetwork`] holds one cumulative [`Snapshot`] per calendar year:
//! the snapshot for year `t` contains every node and edge dated `<= t`.

mod dataset;
mod metapath;
mod snapshot;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    emit, emit_dir, ingest, ingest_dir, CitationRecord, Dataset, DynamicNetwork, NodeRecord,
    CITATIONS_FILE, EDGES_FILE, NODES_FILE,
};
pub use metapath::{metapath_subgraph, MetapathSpec, PaperGraph};
pub use snapshot::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub i64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Paper,
    Author,
    Venue,
    /// Also accepted as `field` on input.
    #[serde(alias = "field")]
    Keyword,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [
        NodeKind::Paper,
        NodeKind::Author,
        NodeKind::Venue,
        NodeKind::Keyword,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Paper => "paper",
            NodeKind::Author => "author",
            NodeKind::Venue => "venue",
            NodeKind::Keyword => "keyword",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// author -> paper
    Writes,
    /// paper -> venue
    Publishes,
    /// paper -> keyword
    Contains,
    /// paper -> paper
    Cites,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::Writes,
        Relation::Publishes,
        Relation::Contains,
        Relation::Cites,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Writes => "writes",
            Relation::Publishes => "publishes",
            Relation::Contains => "contains",
            Relation::Cites => "cites",
        }
    }

    /// Declared `(source, target)` kinds.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            Relation::Writes => (NodeKind::Author, NodeKind::Paper),
            Relation::Publishes => (NodeKind::Paper, NodeKind::Venue),
            Relation::Contains => (NodeKind::Paper, NodeKind::Keyword),
            Relation::Cites => (NodeKind::Paper, NodeKind::Paper),
        }
    }

    /// Kind of the node on the far side of this relation from a paper.
    pub fn paper_neighbor_kind(self) -> NodeKind {
        match self {
            Relation::Writes => NodeKind::Author,
            Relation::Publishes => NodeKind::Venue,
            Relation::Contains => NodeKind::Keyword,
            Relation::Cites => NodeKind::Paper,
        }
    }

    /// The relation joining two kinds, in either orientation.
    pub fn between(a: NodeKind, b: NodeKind) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| {
            let (s, t) = r.endpoints();
            (s, t) == (a, b) || (s, t) == (b, a)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeRef {
    pub id: NodeId,
    pub kind: NodeKind,
}

impl NodeRef {
    pub fn new(id: i64, kind: NodeKind) -> Self {
        Self {
            id: NodeId(id),
            kind,
        }
    }

    pub fn paper(id: i64) -> Self {
        Self::new(id, NodeKind::Paper)
    }
}

/// A typed, dated edge stored in its relation's declared orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: NodeRef,
    pub dst: NodeRef,
    pub relation: Relation,
    pub year: i32,
}

impl Edge {
    /// Build an edge, flipping the endpoints when they were given in the
    /// reverse of the declared orientation.
    pub fn new(a: NodeRef, b: NodeRef, relation: Relation, year: i32) -> Result<Self> {
        let (s, t) = relation.endpoints();
        let (src, dst) = if (a.kind, b.kind) == (s, t) {
            (a, b)
        } else if (b.kind, a.kind) == (s, t) {
            (b, a)
        } else {
            return Err(Error::RelationKindMismatch {
                relation,
                src: a.kind,
                dst: b.kind,
            });
        };
        Ok(Self {
            src,
            dst,
            relation,
            year,
        })
    }
}

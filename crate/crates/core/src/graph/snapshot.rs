use std::collections::{BTreeSet, HashMap};

use super::{Edge, NodeId, NodeKind, NodeRef, Relation};
use crate::error::{Error, Result};

/// One year of the cumulative academic graph.
///
/// Nodes are indexed locally in ascending id order. Each kind also has its
/// own dense block ordering (`kind_position`), which is how the encoders lay
/// out their per-kind feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    year: i32,
    nodes: Vec<NodeRef>,
    index: HashMap<NodeId, usize>,
    by_kind: [Vec<usize>; 4],
    kind_pos: Vec<usize>,
    edges: [Vec<(usize, usize)>; 4],
    adjacency: [Vec<Vec<usize>>; 4],
}

impl Snapshot {
    /// Build a snapshot. Every edge endpoint must be among `nodes` and every
    /// edge must be dated no later than `year`.
    pub fn new(year: i32, nodes: impl IntoIterator<Item = NodeRef>, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut nodes: Vec<NodeRef> = nodes.into_iter().collect();
        nodes.sort();
        nodes.dedup();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if let Some(&prev) = index.get(&n.id) {
                let prev: &NodeRef = &nodes[prev];
                return Err(Error::ConflictingKind {
                    id: n.id,
                    first: prev.kind,
                    second: n.kind,
                });
            }
            index.insert(n.id, i);
        }

        let mut by_kind: [Vec<usize>; 4] = Default::default();
        let mut kind_pos = vec![0; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            let block = &mut by_kind[n.kind.index()];
            kind_pos[i] = block.len();
            block.push(i);
        }

        let mut edge_lists: [Vec<(usize, usize)>; 4] = Default::default();
        let mut adjacency: [Vec<Vec<usize>>; 4] = std::array::from_fn(|_| vec![Vec::new(); nodes.len()]);
        for e in edges {
            if e.year > year {
                return Err(Error::InvalidDataset(format!(
                    "edge {}->{} dated {} in snapshot {year}",
                    e.src.id, e.dst.id, e.year
                )));
            }
            let lookup = |n: NodeRef| -> Result<usize> {
                let &i = index.get(&n.id).ok_or_else(|| {
                    Error::InvalidDataset(format!("edge endpoint {} missing from snapshot {year}", n.id))
                })?;
                if nodes[i].kind != n.kind {
                    return Err(Error::ConflictingKind {
                        id: n.id,
                        first: nodes[i].kind,
                        second: n.kind,
                    });
                }
                Ok(i)
            };
            let s = lookup(e.src)?;
            let t = lookup(e.dst)?;
            let r = e.relation.index();
            edge_lists[r].push((s, t));
        }
        for r in 0..4 {
            edge_lists[r].sort_unstable();
            edge_lists[r].dedup();
            for &(s, t) in &edge_lists[r] {
                adjacency[r][s].push(t);
                if s != t {
                    adjacency[r][t].push(s);
                }
            }
            for list in &mut adjacency[r] {
                list.sort_unstable();
                list.dedup();
            }
        }

        Ok(Self {
            year,
            nodes,
            index,
            by_kind,
            kind_pos,
            edges: edge_lists,
            adjacency,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn local(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, local: usize) -> NodeRef {
        self.nodes[local]
    }

    /// Local indices of all nodes of `kind`, ascending by id.
    pub fn kind_members(&self, kind: NodeKind) -> &[usize] {
        &self.by_kind[kind.index()]
    }

    pub fn kind_count(&self, kind: NodeKind) -> usize {
        self.by_kind[kind.index()].len()
    }

    /// Position of a node inside its kind block.
    pub fn kind_position(&self, local: usize) -> usize {
        self.kind_pos[local]
    }

    /// Edges of one relation as `(src, dst)` local pairs in declared orientation.
    pub fn edges(&self, relation: Relation) -> &[(usize, usize)] {
        &self.edges[relation.index()]
    }

    /// Neighbours of a node through `relation`, ignoring direction.
    pub fn neighbors(&self, local: usize, relation: Relation) -> &[usize] {
        &self.adjacency[relation.index()][local]
    }

    /// `N^r_p`: nodes adjacent to paper `p` via relation `r`.
    pub fn neighbor_set(&self, paper: NodeRef, relation: Relation) -> Result<BTreeSet<NodeId>> {
        if paper.kind != NodeKind::Paper {
            return Err(Error::NotAPaper(paper.id));
        }
        let Some(local) = self.local(paper.id) else {
            return Ok(BTreeSet::new());
        };
        if self.nodes[local].kind != NodeKind::Paper {
            return Err(Error::NotAPaper(paper.id));
        }
        Ok(self.neighbors(local, relation).iter().map(|&j| self.nodes[j].id).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Snapshot {
        let p1 = NodeRef::paper(1);
        let p2 = NodeRef::paper(2);
        let a1 = NodeRef::new(10, NodeKind::Author);
        let a2 = NodeRef::new(11, NodeKind::Author);
        let v = NodeRef::new(20, NodeKind::Venue);
        let edges = vec![
            Edge::new(a1, p1, Relation::Writes, 2000).unwrap(),
            Edge::new(a2, p1, Relation::Writes, 2000).unwrap(),
            Edge::new(a1, p2, Relation::Writes, 2001).unwrap(),
            Edge::new(p2, v, Relation::Publishes, 2001).unwrap(),
            Edge::new(p2, p1, Relation::Cites, 2001).unwrap(),
        ];
        Snapshot::new(2001, [p1, p2, a1, a2, v], edges).unwrap()
    }

    #[test]
    fn neighbor_sets_by_relation() {
        let s = tiny();
        let authors = s.neighbor_set(NodeRef::paper(1), Relation::Writes).unwrap();
        assert_eq!(authors, [NodeId(10), NodeId(11)].into_iter().collect());
        assert!(s.neighbor_set(NodeRef::paper(1), Relation::Publishes).unwrap().is_empty());
        let cites = s.neighbor_set(NodeRef::paper(1), Relation::Cites).unwrap();
        assert_eq!(cites, [NodeId(2)].into_iter().collect());
    }

    #[test]
    fn neighbor_set_rejects_non_papers() {
        let s = tiny();
        assert!(matches!(
            s.neighbor_set(NodeRef::new(10, NodeKind::Author), Relation::Writes),
            Err(Error::NotAPaper(_))
        ));
    }

    #[test]
    fn kind_blocks_are_dense() {
        let s = tiny();
        assert_eq!(s.kind_count(NodeKind::Paper), 2);
        assert_eq!(s.kind_count(NodeKind::Author), 2);
        let a2 = s.local(NodeId(11)).unwrap();
        assert_eq!(s.kind_position(a2), 1);
    }

    #[test]
    fn future_edges_are_rejected() {
        let p = NodeRef::paper(1);
        let a = NodeRef::new(2, NodeKind::Author);
        let e = Edge::new(a, p, Relation::Writes, 2005).unwrap();
        assert!(Snapshot::new(2004, [p, a], [e]).is_err());
    }
}

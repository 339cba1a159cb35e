//! JSONL ingestion and emission.
//!
//! ```text
//! nodes.jsonl      {"id": int, "kind": "paper|author|venue|keyword", "year": int?}
//! edges.jsonl      {"src": int, "dst": int, "relation": "writes|publishes|contains|cites", "year": int}
//! citations.jsonl  {"paper": int, "pub_year": int, "counts": [int, ...]}
//! ```
//!
//! `counts[t - 1]` is the cumulative citation count `t` years after
//! publication.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, NodeId, NodeKind, NodeRef, Relation, Snapshot};
use crate::error::{Error, Result};

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const CITATIONS_FILE: &str = "citations.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EdgeRecord {
    src: NodeId,
    dst: NodeId,
    relation: Relation,
    year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub paper: NodeId,
    pub pub_year: i32,
    pub counts: Vec<u64>,
}

impl CitationRecord {
    /// `log(C + 1)` for the first `horizon` years.
    pub fn log_series(&self, horizon: usize) -> Option<Vec<f64>> {
        (self.counts.len() >= horizon).then(|| {
            self.counts[..horizon]
                .iter()
                .map(|&c| (c as f64 + 1.0).ln())
                .collect()
        })
    }
}

/// Ordered yearly snapshots plus the first-appearance year of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicNetwork {
    snapshots: Vec<Snapshot>,
    nodes: Vec<NodeRef>,
    index: HashMap<NodeId, usize>,
    first_seen: Vec<i32>,
}

impl DynamicNetwork {
    fn build(nodes: Vec<NodeRef>, first_seen: Vec<i32>, edges: &[Edge], years: std::ops::RangeInclusive<i32>) -> Result<Self> {
        let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut snapshots = Vec::new();
        for year in years {
            let members = nodes
                .iter()
                .zip(&first_seen)
                .filter(|(_, &y)| y <= year)
                .map(|(n, _)| *n);
            let year_edges = edges.iter().filter(|e| e.year <= year).copied();
            snapshots.push(Snapshot::new(year, members, year_edges)?);
        }
        if snapshots.is_empty() {
            return Err(Error::InvalidDataset("no years to build snapshots for".into()));
        }
        Ok(Self {
            snapshots,
            nodes,
            index,
            first_seen,
        })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Number of observed years.
    pub fn horizon(&self) -> usize {
        self.snapshots.len()
    }

    pub fn first_year(&self) -> i32 {
        self.snapshots[0].year()
    }

    pub fn last_year(&self) -> i32 {
        self.snapshots[self.snapshots.len() - 1].year()
    }

    pub fn snapshot(&self, year: i32) -> Option<&Snapshot> {
        let offset = year.checked_sub(self.first_year())?;
        usize::try_from(offset).ok().and_then(|i| self.snapshots.get(i))
    }

    /// All nodes ever observed, ascending by id.
    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn global_index(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<NodeRef> {
        self.global_index(id).map(|i| self.nodes[i])
    }

    /// Year a node first appears (a paper's publication year).
    pub fn first_seen(&self, id: NodeId) -> Option<i32> {
        self.global_index(id).map(|i| self.first_seen[i])
    }

    pub fn papers(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.nodes.iter().copied().filter(|n| n.kind == NodeKind::Paper)
    }

    /// The network restricted to years `<= year`.
    pub fn truncated(&self, year: i32) -> Result<DynamicNetwork> {
        let snapshots: Vec<Snapshot> = self.snapshots.iter().filter(|s| s.year() <= year).cloned().collect();
        if snapshots.is_empty() {
            return Err(Error::InvalidDataset(format!("no snapshots at or before {year}")));
        }
        let keep: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.first_seen[i] <= year).collect();
        let nodes: Vec<NodeRef> = keep.iter().map(|&i| self.nodes[i]).collect();
        let first_seen = keep.iter().map(|&i| self.first_seen[i]).collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        Ok(Self {
            snapshots,
            nodes,
            index,
            first_seen,
        })
    }
}

/// A validated dataset: canonical records plus the derived network.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<Edge>,
    pub citations: BTreeMap<NodeId, CitationRecord>,
    pub network: DynamicNetwork,
}

impl Dataset {
    pub fn citation(&self, paper: NodeId) -> Option<&CitationRecord> {
        self.citations.get(&paper)
    }

    /// Papers published in `year`, ascending by id.
    pub fn papers_published_in(&self, year: i32) -> Vec<NodeId> {
        self.network
            .papers()
            .filter(|p| self.network.first_seen(p.id) == Some(year))
            .map(|p| p.id)
            .collect()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(reader: impl BufRead, file: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(file, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            file: file.to_string(),
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

/// Parse and validate the three record streams.
pub fn ingest(nodes: impl BufRead, edges: impl BufRead, citations: impl BufRead) -> Result<Dataset> {
    let node_recs: Vec<(usize, NodeRecord)> = read_jsonl(nodes, NODES_FILE)?;
    let edge_recs: Vec<(usize, EdgeRecord)> = read_jsonl(edges, EDGES_FILE)?;
    let cite_recs: Vec<(usize, CitationRecord)> = read_jsonl(citations, CITATIONS_FILE)?;

    let mut merged: BTreeMap<NodeId, NodeRecord> = BTreeMap::new();
    for (_, rec) in node_recs {
        match merged.get_mut(&rec.id) {
            Some(prev) if prev.kind != rec.kind => {
                return Err(Error::ConflictingKind {
                    id: rec.id,
                    first: prev.kind,
                    second: rec.kind,
                })
            }
            Some(prev) => {
                prev.year = match (prev.year, rec.year) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            None => {
                merged.insert(rec.id, rec);
            }
        }
    }
    if merged.is_empty() {
        return Err(Error::InvalidDataset("no nodes".into()));
    }

    let mut citations = BTreeMap::new();
    for (line, rec) in cite_recs {
        let node = merged.get_mut(&rec.paper).ok_or_else(|| Error::UnknownNode {
            file: CITATIONS_FILE.into(),
            line,
            node: rec.paper,
        })?;
        if node.kind != NodeKind::Paper {
            return Err(Error::NotAPaper(rec.paper));
        }
        match node.year {
            Some(y) if y != rec.pub_year => {
                return Err(Error::MalformedRecord {
                    file: CITATIONS_FILE.into(),
                    line,
                    reason: format!("pub_year {} disagrees with node year {y}", rec.pub_year),
                })
            }
            Some(_) => {}
            None => node.year = Some(rec.pub_year),
        }
        if rec.counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::MalformedRecord {
                file: CITATIONS_FILE.into(),
                line,
                reason: "cumulative counts must be nondecreasing".into(),
            });
        }
        if citations.insert(rec.paper, rec.clone()).is_some() {
            return Err(Error::MalformedRecord {
                file: CITATIONS_FILE.into(),
                line,
                reason: format!("duplicate citation record for paper {}", rec.paper),
            });
        }
    }

    for rec in merged.values() {
        if rec.kind == NodeKind::Paper && rec.year.is_none() {
            return Err(Error::InvalidDataset(format!("paper {} has no publication year", rec.id)));
        }
    }

    let mut edges = Vec::with_capacity(edge_recs.len());
    for (line, rec) in edge_recs {
        let lookup = |id: NodeId| -> Result<NodeRef> {
            merged
                .get(&id)
                .map(|n| NodeRef { id, kind: n.kind })
                .ok_or_else(|| Error::UnknownNode {
                    file: EDGES_FILE.into(),
                    line,
                    node: id,
                })
        };
        let edge = Edge::new(lookup(rec.src)?, lookup(rec.dst)?, rec.relation, rec.year)?;
        for end in [edge.src, edge.dst] {
            if end.kind == NodeKind::Paper && merged[&end.id].year.is_some_and(|y| rec.year < y) {
                return Err(Error::MalformedRecord {
                    file: EDGES_FILE.into(),
                    line,
                    reason: format!("edge year {} precedes publication of paper {}", rec.year, end.id),
                });
            }
        }
        edges.push(edge);
    }
    edges.sort();
    edges.dedup();

    // Non-paper nodes appear at the earlier of their declared year and their
    // first edge.
    let mut first_edge: HashMap<NodeId, i32> = HashMap::new();
    for e in &edges {
        for end in [e.src.id, e.dst.id] {
            let y = first_edge.entry(end).or_insert(e.year);
            *y = (*y).min(e.year);
        }
    }
    let mut nodes = Vec::with_capacity(merged.len());
    let mut seen_years = Vec::with_capacity(merged.len());
    for rec in merged.values() {
        let year = match rec.kind {
            NodeKind::Paper => rec.year,
            _ => match (rec.year, first_edge.get(&rec.id).copied()) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            },
        };
        nodes.push(NodeRef { id: rec.id, kind: rec.kind });
        seen_years.push(year);
    }
    let known: Vec<i32> = seen_years.iter().flatten().copied().chain(edges.iter().map(|e| e.year)).collect();
    let first_year = known.iter().copied().min().ok_or_else(|| {
        Error::InvalidDataset("no dated nodes or edges; cannot place snapshots".into())
    })?;
    let last_year = known.iter().copied().max().unwrap_or(first_year);
    let first_seen: Vec<i32> = seen_years.into_iter().map(|y| y.unwrap_or(first_year)).collect();

    let network = DynamicNetwork::build(nodes, first_seen, &edges, first_year..=last_year)?;
    Ok(Dataset {
        nodes: merged.into_values().collect(),
        edges,
        citations,
        network,
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Ingest `nodes.jsonl`, `edges.jsonl` and `citations.jsonl` from a directory.
/// A missing citations file is treated as empty.
pub fn ingest_dir(dir: &Path) -> Result<Dataset> {
    let cites = dir.join(CITATIONS_FILE);
    let cite_reader: Box<dyn BufRead> = if cites.exists() {
        Box::new(open(&cites)?)
    } else {
        Box::new(std::io::empty())
    };
    ingest(open(&dir.join(NODES_FILE))?, open(&dir.join(EDGES_FILE))?, cite_reader)
}

/// Write canonical JSONL records.
pub fn emit(dataset: &Dataset, mut nodes: impl Write, mut edges: impl Write, mut citations: impl Write) -> std::io::Result<()> {
    for n in &dataset.nodes {
        serde_json::to_writer(&mut nodes, n)?;
        nodes.write_all(b"\n")?;
    }
    for e in &dataset.edges {
        let rec = EdgeRecord {
            src: e.src.id,
            dst: e.dst.id,
            relation: e.relation,
            year: e.year,
        };
        serde_json::to_writer(&mut edges, &rec)?;
        edges.write_all(b"\n")?;
    }
    for c in dataset.citations.values() {
        serde_json::to_writer(&mut citations, c)?;
        citations.write_all(b"\n")?;
    }
    nodes.flush()?;
    edges.flush()?;
    citations.flush()
}

pub fn emit_dir(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    emit(dataset, create(NODES_FILE)?, create(EDGES_FILE)?, create(CITATIONS_FILE)?).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest_str(nodes: &str, edges: &str, cites: &str) -> Result<Dataset> {
        ingest(nodes.as_bytes(), edges.as_bytes(), cites.as_bytes())
    }

    const NODES: &str = r#"{"id": 1, "kind": "paper", "year": 2003}
{"id": 2, "kind": "paper", "year": 2004}
{"id": 10, "kind": "author"}
"#;
    const EDGES: &str = r#"{"src": 10, "dst": 1, "relation": "writes", "year": 2003}
{"src": 2, "dst": 10, "relation": "writes", "year": 2004}
"#;

    #[test]
    fn two_papers_shared_author() {
        let d = ingest_str(NODES, EDGES, "").unwrap();
        let net = &d.network;
        assert_eq!(net.horizon(), 2);
        assert_eq!(net.first_year(), 2003);
        assert!(net.snapshot(2003).unwrap().contains(NodeId(10)));
        assert!(net.snapshot(2004).unwrap().contains(NodeId(10)));
        assert!(!net.snapshot(2003).unwrap().contains(NodeId(2)));
        assert_eq!(net.snapshot(2004).unwrap().edge_count(), 2);
    }

    #[test]
    fn empty_edge_stream_gives_isolated_nodes() {
        let d = ingest_str(NODES, "", "").unwrap();
        assert_eq!(d.network.horizon(), 2);
        let s = d.network.snapshot(2004).unwrap();
        assert_eq!(s.node_count(), 3);
        assert_eq!(s.edge_count(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = ingest_str(NODES, "{\"src\": 10}\n\n{oops", "").unwrap_err();
        match err {
            Error::MalformedRecord { file, line, .. } => {
                assert_eq!(file, EDGES_FILE);
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_edge_endpoint_is_rejected() {
        let edges = "{\"src\": 10, \"dst\": 1, \"relation\": \"writes\", \"year\": 2003}\n{\"src\": 99, \"dst\": 1, \"relation\": \"writes\", \"year\": 2003}\n";
        let err = ingest_str(NODES, edges, "").unwrap_err();
        assert!(matches!(err, Error::UnknownNode { line: 2, node: NodeId(99), .. }));
    }

    #[test]
    fn conflicting_kind_is_rejected() {
        let nodes = format!("{NODES}{{\"id\": 10, \"kind\": \"venue\"}}\n");
        assert!(matches!(ingest_str(&nodes, "", ""), Err(Error::ConflictingKind { .. })));
    }

    #[test]
    fn citation_records_attach_and_validate() {
        let cites = "{\"paper\": 1, \"pub_year\": 2003, \"counts\": [0, 1, 1, 4, 6]}\n";
        let d = ingest_str(NODES, EDGES, cites).unwrap();
        let s = d.citation(NodeId(1)).unwrap().log_series(5).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[4] - 7f64.ln()).abs() < 1e-15);

        let bad = "{\"paper\": 1, \"pub_year\": 2003, \"counts\": [3, 1]}\n";
        assert!(matches!(ingest_str(NODES, EDGES, bad), Err(Error::MalformedRecord { .. })));
        let wrong_year = "{\"paper\": 1, \"pub_year\": 2001, \"counts\": [0]}\n";
        assert!(ingest_str(NODES, EDGES, wrong_year).is_err());
    }

    #[test]
    fn edges_before_publication_are_rejected() {
        let edges = "{\"src\": 10, \"dst\": 2, \"relation\": \"writes\", \"year\": 2003}\n";
        assert!(ingest_str(NODES, edges, "").is_err());
    }

    #[test]
    fn snapshots_are_cumulative() {
        let d = ingest_str(NODES, EDGES, "").unwrap();
        let snaps = d.network.snapshots();
        for w in snaps.windows(2) {
            for n in w[0].nodes() {
                assert!(w[1].contains(n.id));
            }
        }
    }

    #[test]
    fn truncation_drops_later_years() {
        let d = ingest_str(NODES, EDGES, "").unwrap();
        let t = d.network.truncated(2003).unwrap();
        assert_eq!(t.horizon(), 1);
        assert!(t.global_index(NodeId(2)).is_none());
    }
}

//! Generate the default synthetic benchmark and write it as JSONL.
//!
//! `cargo run --example synthetic_dataset -- [out_dir]`

use std::collections::BTreeMap;

use citecast::graph::{emit_dir, NodeKind};
use citecast::synth::{generate, SyntheticSpec};

fn main() -> citecast::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/synthetic".into());
    let spec = SyntheticSpec::default();
    let syn = generate(&spec)?;
    let d = &syn.dataset;

    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for n in d.network.nodes() {
        *kinds.entry(n.kind.name()).or_default() += 1;
    }
    println!("nodes by kind: {kinds:?}");
    println!("edges: {}", d.edges.len());
    for s in d.network.snapshots() {
        println!(
            "  {}: {} nodes ({} papers), {} edges",
            s.year(),
            s.node_count(),
            s.kind_count(NodeKind::Paper),
            s.edge_count()
        );
    }

    // Long tail of five-year counts.
    let mut finals: Vec<u64> = d.citations.values().map(|c| c.counts[spec.horizon - 1]).collect();
    finals.sort();
    let q = |f: f64| finals[((finals.len() - 1) as f64 * f) as usize];
    println!("five-year citations: median {}, p90 {}, p99 {}, max {}", q(0.5), q(0.9), q(0.99), finals[finals.len() - 1]);

    let (id, p) = syn.planted.iter().next().unwrap();
    println!("planted curve of paper {id}: mu {:.3} sigma {:.3} eta {:.3}", p.mu, p.sigma, p.eta);

    emit_dir(d, std::path::Path::new(&out))?;
    println!("wrote {out}/{{nodes,edges,citations}}.jsonl");
    Ok(())
}

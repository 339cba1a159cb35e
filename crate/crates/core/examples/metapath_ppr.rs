//! Metapath subgraphs of one snapshot and their sparse PPR rows.

use citecast::graph::{metapath_subgraph, MetapathSpec};
use citecast::ppr::{approx_ppr, exact_ppr, PprConfig};
use citecast::synth::{generate, SyntheticSpec};

fn main() -> citecast::Result<()> {
    let spec = SyntheticSpec {
        n_papers: 150,
        ..SyntheticSpec::default()
    };
    let d = generate(&spec)?.dataset;
    let snap = d.network.snapshot(2006).expect("year in range");
    let cfg = PprConfig {
        k: 8,
        ..PprConfig::default()
    };

    for m in MetapathSpec::defaults().into_iter().chain([MetapathSpec::parse("PAPVP")?]) {
        let g = metapath_subgraph(snap, &m);
        let isolated = (0..g.node_count()).filter(|&i| g.degree(i) == 0).count();
        println!(
            "{:6} {} papers, {} edges, {} isolated, {} walks per source",
            m.name(),
            g.node_count(),
            g.edge_count(),
            isolated,
            cfg.walk_count(g.node_count())
        );

        let rows = approx_ppr(&g, &cfg)?;
        let exact = exact_ppr(&g.to_dense(), cfg.alpha)?;
        let src = (0..g.node_count()).max_by_key(|&i| g.degree(i)).unwrap_or(0);
        println!("  top-{} row of paper {} (degree {}):", cfg.k, g.papers[src], g.degree(src));
        for &(j, v) in rows.row(src) {
            println!("    {:>5}  approx {v:.4}  exact {:.4}", g.papers[j].0, exact[src][j]);
        }
    }
    Ok(())
}

//! PPR-aware node-level attention and semantic fusion over metapaths for the
//! papers of one publication year.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use citecast::autodiff::Tape;
use citecast::graph::{metapath_subgraph, MetapathSpec};
use citecast::importance::{ImportanceConfig, ImportanceEncoder, MetapathInput};
use citecast::params::ParamStore;
use citecast::ppr::{approx_ppr, PprConfig};
use citecast::synth::{generate, SyntheticSpec};
use citecast::tensor::Tensor;

fn main() -> citecast::Result<()> {
    let d = generate(&SyntheticSpec {
        n_papers: 200,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let snap = d.network.snapshot(2007).unwrap();
    let specs = MetapathSpec::defaults();
    let ppr_cfg = PprConfig {
        k: 8,
        ..PprConfig::default()
    };
    let graphs: Vec<_> = specs.iter().map(|m| metapath_subgraph(snap, m)).collect();
    let pprs = graphs
        .iter()
        .map(|g| approx_ppr(g, &ppr_cfg).map(|r| r.feature_matrix(ppr_cfg.k)))
        .collect::<citecast::Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = ImportanceConfig {
        input_dim: 16,
        dim: 16,
        k: ppr_cfg.k,
        ..ImportanceConfig::default()
    };
    let names: Vec<String> = specs.iter().map(|m| m.name().to_string()).collect();
    let mut store = ParamStore::new();
    let enc = ImportanceEncoder::new(cfg, &names, &mut store, &mut rng)?;
    let x = Tensor::xavier(graphs[0].node_count(), 16, &mut rng);

    let tape = Tape::new();
    let inputs: Vec<MetapathInput> = graphs.iter().zip(&pprs).map(|(graph, ppr)| MetapathInput { graph, ppr }).collect();
    let out = enc.forward(&tape, &store, &inputs, tape.constant(x))?;

    let w = out.weights.value();
    for (m, name) in names.iter().enumerate() {
        println!("semantic weight {name}: {:.4}", w.data()[m]);
    }
    // Heaviest neighbours of the best-connected paper under the first metapath.
    let g = &graphs[0];
    let i = (0..g.node_count()).max_by_key(|&i| g.degree(i)).unwrap();
    let (edges, layers) = &out.attention[0];
    let att = layers.last().unwrap().value();
    let mut incoming: Vec<(usize, f64)> = (0..edges.len())
        .filter(|&e| edges.dst[e] == i)
        .map(|e| (edges.src[e], att.get(e, 0)))
        .collect();
    incoming.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("{} attention of paper {} (head 0):", names[0], g.papers[i]);
    for (j, a) in incoming.iter().take(5) {
        println!("  from {:>5}: {a:.4}", g.papers[*j].0);
    }
    println!("fused embeddings: {:?}", out.fused.shape());
    Ok(())
}

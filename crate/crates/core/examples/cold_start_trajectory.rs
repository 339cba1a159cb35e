//! Impute the pre-publication trajectory of a new paper from the embeddings
//! of its authors, venue and keywords in earlier snapshots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use citecast::encoder::{encode_snapshot, EncoderConfig, HeteroEncoder};
use citecast::graph::Relation;
use citecast::imputer::{build_trajectory, plan_trajectory, Imputer};
use citecast::params::ParamStore;
use citecast::synth::{generate, SyntheticSpec};
use citecast::tensor::Tensor;

fn main() -> citecast::Result<()> {
    let d = generate(&SyntheticSpec {
        n_papers: 120,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let paper = d.papers_published_in(2008)[0];
    let plan = plan_trajectory(&d.network, paper, 3)?.expect("metadata seen before 2008");
    println!("paper {paper}, published {}", plan.pub_year);
    for (year, sets) in &plan.steps {
        let sizes: Vec<String> = Relation::ALL
            .iter()
            .map(|r| format!("{} {}", r.name(), sets[r.index()].len()))
            .collect();
        println!("  {year}: observed neighbours {}", sizes.join(", "));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let encoder = HeteroEncoder::new(
        EncoderConfig {
            input_dim: 8,
            dim: 8,
            heads: 2,
            layers: 1,
        },
        &mut store,
        &mut rng,
    )?;
    let imputer = Imputer::new(8, &mut store, &mut rng);
    let features = Tensor::xavier(d.network.nodes().len(), 8, &mut rng);
    let embeddings = plan
        .years()
        .map(|y| {
            let s = d.network.snapshot(y).unwrap();
            let rows: Vec<Vec<f64>> = s
                .nodes()
                .iter()
                .map(|n| features.row(d.network.global_index(n.id).unwrap()).to_vec())
                .collect();
            encode_snapshot(&encoder, &store, s, &Tensor::from_rows(&rows))
        })
        .collect::<citecast::Result<Vec<_>>>()?;

    let traj = build_trajectory(&plan, &embeddings, &imputer.weights(&store))?;
    for (y, v) in traj.years.iter().zip(&traj.vectors) {
        let head: Vec<String> = v.iter().take(4).map(|x| format!("{x:+.3}")).collect();
        println!("  fake embedding {y}: [{} ...]", head.join(", "));
    }
    Ok(())
}

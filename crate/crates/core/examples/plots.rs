//! Curve overlays, per-year errors and embedding projections as SVG.
//!
//! `cargo run --release --example plots -- [out_dir]`

use std::path::PathBuf;

use citecast::plot::{pca_2d, plot_curves, plot_embeddings, plot_report, CurvePanel};
use citecast::synth::{generate, SyntheticSpec};
use citecast::train::{evaluate, train, Config, Context, SplitName};

fn main() -> citecast::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/plots".into()));
    std::fs::create_dir_all(&out).expect("create output directory");
    let d = generate(&SyntheticSpec {
        n_papers: 150,
        n_authors: 120,
        ..SyntheticSpec::default()
    })?
    .dataset;
    let mut cfg = Config::default();
    cfg.dim = 16;
    cfg.feature_dim = 16;
    cfg.train.epochs = 10;
    let cfg = cfg.resolve()?;
    let mut ctx = Context::new(&d.network, &cfg);
    let model = train(&d, &mut ctx, &cfg, None)?.best.model()?;

    let (test, preds) = evaluate(&model, &mut ctx, &d, SplitName::Test)?;
    let (val, _) = evaluate(&model, &mut ctx, &d, SplitName::Val)?;
    let panels: Vec<CurvePanel> = preds
        .iter()
        .take(9)
        .map(|p| CurvePanel {
            paper: p.paper.0,
            predicted: p.series.clone(),
            truth: d.citation(p.paper).and_then(|c| c.log_series(p.series.len())),
        })
        .collect();
    plot_curves(&panels, &out.join("curves.svg"), 3)?;
    plot_report(&[val, test], &out.join("report.svg"))?;

    let groups: Vec<i64> = preds.iter().map(|p| p.series.last().unwrap().round() as i64).collect();
    for (name, rows) in [
        ("trend", preds.iter().map(|p| p.trend.clone()).collect::<Vec<_>>()),
        ("importance", preds.iter().map(|p| p.importance.clone()).collect()),
    ] {
        let pts = pca_2d(&rows)?;
        plot_embeddings(&pts, &groups, &format!("{name} embeddings by predicted log count"), &out.join(format!("embeddings_{name}.svg")))?;
    }
    println!("wrote curves.svg, report.svg, embeddings_trend.svg, embeddings_importance.svg to {}", out.display());
    Ok(())
}

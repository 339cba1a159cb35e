//! Train on a small synthetic network, then score the test year.
//!
//! `cargo run --release --example train_and_evaluate -- [epochs]`

use citecast::synth::{generate, SyntheticSpec};
use citecast::train::{evaluate, train, write_predictions, Config, Context, SplitName};

fn main() -> citecast::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let epochs = std::env::args().nth(1).map_or(20, |a| a.parse().expect("epoch count"));
    let d = generate(&SyntheticSpec {
        n_papers: 200,
        n_authors: 160,
        ..SyntheticSpec::default()
    })?
    .dataset;

    let mut cfg = Config::default();
    cfg.dim = 16;
    cfg.feature_dim = 16;
    cfg.train.epochs = epochs;
    let cfg = cfg.resolve()?;
    let mut ctx = Context::new(&d.network, &cfg);

    let out = train(&d, &mut ctx, &cfg, None)?;
    println!(
        "split: train {:?}, val {}, test {}",
        out.split.train, out.split.val, out.split.test
    );
    println!("untrained val MAE {:.4}", out.initial_val.overall_mae);
    for l in &out.log {
        println!("epoch {:3}  loss {:.4}  val MAE {:.4}", l.epoch, l.train_loss, l.val_mae);
    }
    println!("best epoch {}, stopped early: {}", out.best.epoch, out.stopped_early);

    let model = out.best.model()?;
    let (report, preds) = evaluate(&model, &mut ctx, &d, SplitName::Test)?;
    let per_year: Vec<String> = report.mae.iter().map(|m| format!("{m:.3}")).collect();
    println!("test MAE {:.4} RMSE {:.4}, by year [{}]", report.overall_mae, report.overall_rmse, per_year.join(", "));

    let mut csv = Vec::new();
    write_predictions(&preds[..3.min(preds.len())], Some(&d), &mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

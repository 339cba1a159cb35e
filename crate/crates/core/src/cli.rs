//! Command-line workflow: synth, ingest, ppr, train, predict, evaluate, plot.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::graph::{emit_dir, ingest, ingest_dir, Dataset, NodeId, CITATIONS_FILE, EDGES_FILE, NODES_FILE};
use crate::plot;
use crate::ppr::cached_approx_ppr;
use crate::synth::{generate, SyntheticSpec};
use crate::train::{
    evaluate, evaluate_set, paper_set, train, write_predictions, Checkpoint, Config, Context, EvalReport, Prediction, SplitName,
};

#[derive(Debug, Parser)]
#[command(name = "citecast", version, about = "Cold-start citation series forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with any of the `train`, `split`, `ppr`, `encoder`,
    /// `trajectory`, `importance` and `generator` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides both the training and the random-walk seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    pub fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = self.seed {
            cfg.train.seed = s;
            cfg.ppr.seed = s;
        }
        cfg.resolve()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth {
        /// TOML file with `SyntheticSpec` fields; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        papers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate raw JSONL files and write them back in canonical form.
    Ingest {
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        citations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precompute PPR rows for every year and metapath into a cache directory.
    Ppr {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, writing checkpoints and logs under `--out`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Independent runs with seeds `seed, seed+1, ...`; reports mean and
        /// standard deviation of the test metrics.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Continue from a checkpoint holding optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Reuse PPR rows from this directory.
        #[arg(long)]
        ppr_cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict citation series for papers with a trained checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated paper ids; defaults to every paper of `--split`.
        #[arg(long, value_delimiter = ',')]
        papers: Vec<i64>,
        #[arg(long, default_value = "test")]
        split: SplitName,
        /// Also write trend and importance vectors here.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        ppr_cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-year MAE and RMSE for a split, from a checkpoint or a predictions file.
    Evaluate {
        #[arg(long, required_unless_present = "predictions")]
        checkpoint: Option<PathBuf>,
        #[arg(long, required_unless_present = "predictions")]
        data: Option<PathBuf>,
        /// Score a predictions CSV that carries ground truth instead.
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitName,
        #[arg(long)]
        ppr_cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG figures.
    Plot {
        #[arg(long, required_unless_present_any = ["report", "embeddings"])]
        predictions: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Maximum number of papers in a curve grid.
        #[arg(long, default_value_t = 12)]
        max_papers: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn context<'a>(dataset: &'a Dataset, cfg: &Config, cache: Option<&PathBuf>) -> Context<'a> {
    let ctx = Context::new(&dataset.network, cfg);
    match cache {
        Some(dir) => ctx.with_cache_dir(dir),
        None => ctx,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, papers, seed, out } => cmd_synth(spec.as_deref(), papers, seed, &out),
        Command::Ingest {
            nodes,
            edges,
            citations,
            out,
        } => cmd_ingest(&nodes, &edges, citations.as_deref(), &out),
        Command::Ppr { data, common, out } => cmd_ppr(&data, &common.load()?, &out),
        Command::Train {
            data,
            common,
            repeats,
            resume,
            ppr_cache,
            out,
        } => cmd_train(&data, &common.load()?, repeats, resume.as_deref(), ppr_cache.as_ref(), &out),
        Command::Predict {
            checkpoint,
            data,
            papers,
            split,
            embeddings,
            ppr_cache,
            out,
        } => cmd_predict(&checkpoint, &data, &papers, split, embeddings.as_deref(), ppr_cache.as_ref(), &out),
        Command::Evaluate {
            checkpoint,
            data,
            predictions,
            split,
            ppr_cache,
            out,
        } => {
            let report = match (predictions, checkpoint, data) {
                (Some(p), _, _) => evaluate_predictions(&p, split)?,
                (None, Some(c), Some(d)) => cmd_evaluate(&c, &d, split, ppr_cache.as_ref())?,
                _ => return Err(Error::InvalidConfig("evaluate needs --predictions or --checkpoint with --data".into())),
            };
            match out {
                Some(path) => EvalReport::write_csv(std::slice::from_ref(&report), create(&path)?),
                None => EvalReport::write_csv(std::slice::from_ref(&report), std::io::stdout().lock()),
            }
        }
        Command::Plot {
            predictions,
            report,
            embeddings,
            max_papers,
            out,
        } => cmd_plot(predictions.as_deref(), report.as_deref(), embeddings.as_deref(), max_papers, &out),
    }
}

pub fn cmd_synth(spec_path: Option<&Path>, papers: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(n) = papers {
        spec.n_papers = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let syn = generate(&spec)?;
    emit_dir(&syn.dataset, out)?;
    log::info!(
        "wrote {} nodes, {} edges, {} citation records to {}",
        syn.dataset.nodes.len(),
        syn.dataset.edges.len(),
        syn.dataset.citations.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_ingest(nodes: &Path, edges: &Path, citations: Option<&Path>, out: &Path) -> Result<()> {
    let open = |p: &Path| File::open(p).map(std::io::BufReader::new).map_err(|e| Error::io(p, e));
    let cites: Box<dyn std::io::BufRead> = match citations {
        Some(p) => Box::new(open(p)?),
        None => Box::new(std::io::empty()),
    };
    let dataset = ingest(open(nodes)?, open(edges)?, cites)?;
    emit_dir(&dataset, out)?;
    log::info!(
        "{} nodes, {} edges, {} snapshots ({}..={}) -> {}/{{{NODES_FILE},{EDGES_FILE},{CITATIONS_FILE}}}",
        dataset.nodes.len(),
        dataset.edges.len(),
        dataset.network.horizon(),
        dataset.network.first_year(),
        dataset.network.last_year(),
        out.display()
    );
    Ok(())
}

pub fn cmd_ppr(data: &Path, cfg: &Config, out: &Path) -> Result<()> {
    let dataset = ingest_dir(data)?;
    for s in dataset.network.snapshots() {
        for m in cfg.metapath_specs() {
            let g = crate::graph::metapath_subgraph(s, &m);
            let rows = cached_approx_ppr(out, s.year(), m.name(), &g, &cfg.ppr)?;
            log::info!("{} {}: {} papers, {} edges", s.year(), m, rows.len(), g.edge_count());
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn cmd_train(data: &Path, cfg: &Config, repeats: usize, resume: Option<&Path>, cache: Option<&PathBuf>, out: &Path) -> Result<()> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("--repeats must be at least 1".into()));
    }
    let dataset = ingest_dir(data)?;
    let resume = resume.map(Checkpoint::load).transpose()?;
    let mut ctx = context(&dataset, cfg, cache);
    let mut reports = Vec::new();
    for r in 0..repeats {
        let mut run_cfg = cfg.clone();
        run_cfg.train.seed = cfg.train.seed + r as u64;
        let dir = if repeats == 1 { out.to_path_buf() } else { out.join(format!("run{r}")) };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let outcome = train(&dataset, &mut ctx, &run_cfg, resume.as_ref())?;
        outcome.best.save(&dir.join("best.json"))?;
        outcome.last.save(&dir.join("last.json"))?;
        outcome.write_log(create(&dir.join("training_log.csv"))?)?;
        outcome.write_semantic(create(&dir.join("semantic_weights.csv"))?)?;
        let model = outcome.best.model()?;
        let (report, _) = evaluate(&model, &mut ctx, &dataset, SplitName::Test)?;
        log::info!(
            "run {r} (seed {}): best epoch {}, test MAE {:.4} RMSE {:.4}",
            run_cfg.train.seed,
            outcome.best.epoch,
            report.overall_mae,
            report.overall_rmse
        );
        EvalReport::write_csv(std::slice::from_ref(&report), create(&dir.join("test_report.csv"))?)?;
        reports.push(report);
    }
    let (mae_m, mae_s) = mean_std(&reports.iter().map(|r| r.overall_mae).collect::<Vec<_>>());
    let (rmse_m, rmse_s) = mean_std(&reports.iter().map(|r| r.overall_rmse).collect::<Vec<_>>());
    let mut w = create(&out.join("summary.csv"))?;
    writeln!(w, "runs,mae_mean,mae_std,rmse_mean,rmse_std").map_err(|e| Error::io(out, e))?;
    writeln!(w, "{repeats},{mae_m:.6},{mae_s:.6},{rmse_m:.6},{rmse_s:.6}").map_err(|e| Error::io(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    println!("test MAE {mae_m:.4} ± {mae_s:.4}  RMSE {rmse_m:.4} ± {rmse_s:.4}  over {repeats} run(s)");
    Ok(())
}

fn load_model(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, Dataset)> {
    let ck = Checkpoint::load(checkpoint)?;
    let dataset = ingest_dir(data)?;
    Ok((ck, dataset))
}

fn write_embeddings(preds: &[Prediction], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let d = preds.first().map_or(0, |p| p.trend.len());
    let mut header = vec!["paper_id".to_string(), "pub_year".into(), "branch".into(), "trend_weight".into(), "predicted_final".into()];
    header.extend((0..d).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for p in preds {
        for (branch, v) in [("trend", &p.trend), ("importance", &p.importance)] {
            let mut row = vec![
                p.paper.to_string(),
                p.pub_year.to_string(),
                branch.to_string(),
                p.trend_weight.to_string(),
                p.series.last().copied().unwrap_or(0.0).to_string(),
            ];
            row.extend(v.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn cmd_predict(
    checkpoint: &Path,
    data: &Path,
    papers: &[i64],
    split: SplitName,
    embeddings: Option<&Path>,
    cache: Option<&PathBuf>,
    out: &Path,
) -> Result<()> {
    let (ck, dataset) = load_model(checkpoint, data)?;
    let model = ck.model()?;
    let mut ctx = context(&dataset, &model.config, cache);
    let wanted: Vec<NodeId> = if papers.is_empty() {
        let s = model.config.split.resolve(ctx.network())?;
        s.years(split).into_iter().flat_map(|y| dataset.papers_published_in(y)).collect()
    } else {
        papers.iter().map(|&p| NodeId(p)).collect()
    };
    let (ok, skipped) = ctx.prepare(&wanted)?;
    if !skipped.is_empty() {
        log::warn!("{} papers without metadata history were skipped", skipped.len());
    }
    if ok.is_empty() {
        return Err(Error::EmptyInput("no predictable papers".into()));
    }
    let preds = model.predict(&ctx, &ok)?;
    write_predictions(&preds, Some(&dataset), create(out)?)?;
    if let Some(path) = embeddings {
        write_embeddings(&preds, path)?;
    }
    log::info!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

pub fn cmd_evaluate(checkpoint: &Path, data: &Path, split: SplitName, cache: Option<&PathBuf>) -> Result<EvalReport> {
    let (ck, dataset) = load_model(checkpoint, data)?;
    let model = ck.model()?;
    let mut ctx = context(&dataset, &model.config, cache);
    let s = model.config.split.resolve(ctx.network())?;
    let set = paper_set(&dataset, &mut ctx, &s.years(split), model.config.generator.horizon, true)?;
    Ok(evaluate_set(&model, &ctx, &set, split.name())?.0)
}

/// Score a predictions CSV whose ground-truth column is filled for every row.
pub fn evaluate_predictions(path: &Path, split: SplitName) -> Result<EvalReport> {
    let rows = plot::read_predictions(path)?;
    let panels = plot::panels(&rows);
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for p in panels {
        let t = p.truth.ok_or(Error::MissingGroundTruth(NodeId(p.paper)))?;
        pred.push(p.predicted);
        truth.push(t);
    }
    EvalReport::from_series(split.name(), &pred, &truth)
}

fn read_embeddings(path: &Path) -> Result<Vec<(String, i64, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::MalformedRecord {
            file: path.display().to_string(),
            line: i + 2,
            reason,
        };
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
        let year = rec.get(1).ok_or_else(|| bad("missing pub_year".into()))?;
        let year = year.parse::<i64>().map_err(|e| bad(format!("{year:?}: {e}")))?;
        let branch = rec.get(2).ok_or_else(|| bad("missing branch".into()))?.to_string();
        let v = rec.iter().skip(5).map(num).collect::<Result<Vec<_>>>()?;
        out.push((branch, year, v));
    }
    Ok(out)
}

pub fn cmd_plot(predictions: Option<&Path>, report: Option<&Path>, embeddings: Option<&Path>, max_papers: usize, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if let Some(p) = predictions {
        let mut panels = plot::panels(&plot::read_predictions(p)?);
        panels.truncate(max_papers.max(1));
        plot::plot_curves(&panels, &out.join("curves.svg"), 4)?;
    }
    if let Some(r) = report {
        let text = File::open(r).map_err(|e| Error::io(r, e))?;
        plot::plot_report(&EvalReport::read_csv(text)?, &out.join("report.svg"))?;
    }
    if let Some(e) = embeddings {
        let rows = read_embeddings(e)?;
        let branches: BTreeSet<&str> = rows.iter().map(|r| r.0.as_str()).collect();
        for b in branches {
            let (years, vecs): (Vec<i64>, Vec<Vec<f64>>) = rows.iter().filter(|r| r.0 == b).map(|r| (r.1, r.2.clone())).unzip();
            let pts = plot::pca_2d(&vecs)?;
            plot::plot_embeddings(&pts, &years, &format!("{b} embeddings by publication year"), &out.join(format!("embeddings_{b}.svg")))?;
        }
    }
    log::info!("figures written to {}", out.display());
    Ok(())
}

/// One machine-parseable line for a failed command.
pub fn error_line(e: &Error) -> String {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} msg={msg:?}", e.kind())
}

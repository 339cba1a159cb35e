use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, StopState};
use super::config::{Config, Split, SplitName};
use super::metrics::EvalReport;
use super::model::{Context, Model, Prediction};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{Dataset, NodeId};
use crate::params::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Papers of one split that can be fed to the model, with their targets.
#[derive(Debug, Clone)]
pub struct PaperSet {
    pub papers: Vec<NodeId>,
    /// `B x L` logged ground truth.
    pub targets: Tensor,
    /// Papers without any observed metadata history.
    pub untrainable: Vec<NodeId>,
}

impl PaperSet {
    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    fn subset_targets(&self, idx: &[usize]) -> Tensor {
        let l = self.targets.cols();
        let mut data = Vec::with_capacity(idx.len() * l);
        for &i in idx {
            data.extend_from_slice(self.targets.row(i));
        }
        Tensor::from_vec(idx.len(), l, data)
    }
}

/// Papers published in `years`. With `require_truth`, a paper without a
/// full ground-truth series is an error; otherwise it is skipped.
pub fn paper_set(dataset: &Dataset, ctx: &mut Context<'_>, years: &[i32], horizon: usize, require_truth: bool) -> Result<PaperSet> {
    let mut candidates = Vec::new();
    let mut rows = Vec::new();
    for &year in years {
        for paper in dataset.papers_published_in(year) {
            match dataset.citation(paper).and_then(|c| c.log_series(horizon)) {
                Some(series) => {
                    candidates.push(paper);
                    rows.push(series);
                }
                None if require_truth => return Err(Error::MissingGroundTruth(paper)),
                None => log::info!("paper {paper} has no {horizon}-year ground truth; skipped"),
            }
        }
    }
    let (papers, untrainable) = ctx.prepare(&candidates)?;
    let keep: std::collections::HashSet<NodeId> = papers.iter().copied().collect();
    let data: Vec<f64> = candidates
        .iter()
        .zip(rows)
        .filter(|(p, _)| keep.contains(p))
        .flat_map(|(_, r)| r)
        .collect();
    Ok(PaperSet {
        targets: Tensor::from_vec(papers.len(), horizon, data),
        papers,
        untrainable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub pred_loss: f64,
    pub time_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticLog {
    pub epoch: usize,
    pub year: i32,
    pub metapath: String,
    pub weight: f64,
}

pub struct TrainOutcome {
    pub split: Split,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochLog>,
    /// Validation report of the model before its first update in this run.
    pub initial_val: EvalReport,
    pub semantic: Vec<SemanticLog>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn write_log(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("training log", e))?;
        Ok(())
    }

    pub fn write_semantic(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.semantic {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("semantic weights", e))?;
        Ok(())
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64)
}

/// Forward-only evaluation of `set`.
pub fn evaluate_set(model: &Model, ctx: &Context<'_>, set: &PaperSet, split: &str) -> Result<(EvalReport, Vec<Prediction>)> {
    if set.is_empty() {
        return Err(Error::EmptyInput(format!("{split} split has no evaluable papers")));
    }
    let preds = model.predict(ctx, &set.papers)?;
    let pred: Vec<Vec<f64>> = preds.iter().map(|p| p.series.clone()).collect();
    let truth: Vec<Vec<f64>> = (0..set.len()).map(|i| set.targets.row(i).to_vec()).collect();
    Ok((EvalReport::from_series(split, &pred, &truth)?, preds))
}

pub fn evaluate(model: &Model, ctx: &mut Context<'_>, dataset: &Dataset, split: SplitName) -> Result<(EvalReport, Vec<Prediction>)> {
    let s = model.config.split.resolve(ctx.network())?;
    let set = paper_set(dataset, ctx, &s.years(split), model.config.generator.horizon, true)?;
    evaluate_set(model, ctx, &set, split.name())
}

/// Train from scratch, or continue `resume` for the remaining epochs.
pub fn train(dataset: &Dataset, ctx: &mut Context<'_>, config: &Config, resume: Option<&Checkpoint>) -> Result<TrainOutcome> {
    let config = config.clone().resolve()?;
    let horizon = config.generator.horizon;
    let split = config.split.resolve(ctx.network())?;
    let train_set = paper_set(dataset, ctx, &split.train, horizon, false)?;
    let val_set = paper_set(dataset, ctx, &[split.val], horizon, false)?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("no trainable papers in the training years".into()));
    }
    log::info!(
        "train years {:?}: {} papers ({} untrainable); val {}: {} papers",
        split.train,
        train_set.len(),
        train_set.untrainable.len(),
        split.val,
        val_set.len()
    );

    let (mut model, mut adam, mut stop, start) = match resume {
        Some(ck) => {
            // The stopping budget comes from the caller; everything else from the checkpoint.
            let mut model = ck.model()?;
            model.config.train.epochs = config.train.epochs;
            model.config.train.patience = config.train.patience;
            let adam = ck.optimizer.clone().ok_or_else(|| Error::Checkpoint("no optimizer state to resume from".into()))?;
            (model, adam, ck.stop.clone(), ck.epoch)
        }
        None => {
            let model = Model::for_network(config.clone(), ctx.network())?;
            let adam = Adam::new(
                AdamConfig {
                    learning_rate: config.train.learning_rate,
                    ..AdamConfig::default()
                },
                &model.store,
            );
            (model, adam, StopState::default(), 0)
        }
    };
    let epochs = model.config.train.epochs;
    let seed = model.config.train.seed;
    let batch = model.config.train.batch_size;

    let initial_val = if val_set.is_empty() {
        return Err(Error::EmptyInput(format!("no evaluable papers in validation year {}", split.val)));
    } else {
        evaluate_set(&model, ctx, &val_set, "val")?.0
    };
    let mut best = Checkpoint::capture(&model, start, Some(&adam), &stop);
    let mut log = Vec::new();
    let mut semantic = Vec::new();
    let mut stopped_early = false;

    for epoch in start + 1..=epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut epoch_rng(seed, epoch));
        let (mut total, mut pred, mut time) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(batch) {
            let papers: Vec<NodeId> = chunk.iter().map(|&i| train_set.papers[i]).collect();
            let targets = train_set.subset_targets(chunk);
            let tape = Tape::new();
            let (t, p, tl) = model.loss(&tape, ctx, &papers, &targets)?;
            let (tv, pv, tlv) = (t.value().scalar(), p.value().scalar(), tl.value().scalar());
            if !tv.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss {tv} (prediction {pv}, temporal {tlv})"),
                });
            }
            let grads = tape.backward(t);
            let w = chunk.len() as f64 / train_set.len() as f64;
            total += w * tv;
            pred += w * pv;
            time += w * tlv;
            adam.step(&mut model.store, &grads.params());
        }

        let (report, _) = evaluate_set(&model, ctx, &val_set, "val")?;
        if !report.overall_mae.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite validation error".into(),
            });
        }
        for (m, wt) in model.config.metapaths.iter().zip(model.semantic_weights(ctx, split.val)?) {
            semantic.push(SemanticLog {
                epoch,
                year: split.val,
                metapath: m.clone(),
                weight: wt,
            });
        }
        log::info!(
            "epoch {epoch}: loss {total:.5} (pred {pred:.5}, time {time:.5}) val MAE {:.5} RMSE {:.5}",
            report.overall_mae,
            report.overall_rmse
        );
        log.push(EpochLog {
            epoch,
            train_loss: total,
            pred_loss: pred,
            time_loss: time,
            val_mae: report.overall_mae,
            val_rmse: report.overall_rmse,
        });

        if stop.best_val_mae.is_none_or(|b| report.overall_mae < b) {
            stop.best_val_mae = Some(report.overall_mae);
            stop.best_epoch = epoch;
            stop.stale_epochs = 0;
            best = Checkpoint::capture(&model, epoch, Some(&adam), &stop);
        } else {
            stop.stale_epochs += 1;
        }
        if stop.stale_epochs >= model.config.train.patience {
            log::info!("early stop at epoch {epoch}; best epoch {}", stop.best_epoch);
            stopped_early = true;
            let last = Checkpoint::capture(&model, epoch, Some(&adam), &stop);
            return Ok(TrainOutcome {
                split,
                best,
                last,
                log,
                initial_val,
                semantic,
                stopped_early,
            });
        }
    }
    let done = log.last().map_or(start, |l| l.epoch);
    let last = Checkpoint::capture(&model, done, Some(&adam), &stop);
    Ok(TrainOutcome {
        split,
        best,
        last,
        log,
        initial_val,
        semantic,
        stopped_early,
    })
}

/// `paper_id,year_offset,predicted_log_cumulative,ground_truth_log_cumulative`;
/// the last column is empty when the truth is unknown.
pub fn write_predictions(preds: &[Prediction], dataset: Option<&Dataset>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["paper_id", "year_offset", "predicted_log_cumulative", "ground_truth_log_cumulative"])?;
    for p in preds {
        let truth = dataset.and_then(|d| d.citation(p.paper)).map(|c| c.log_series(c.counts.len()).unwrap_or_default());
        for (t, v) in p.series.iter().enumerate() {
            let gt = truth.as_ref().and_then(|s| s.get(t)).map(|g| g.to_string()).unwrap_or_default();
            w.write_record([p.paper.to_string(), (t + 1).to_string(), v.to_string(), gt])?;
        }
    }
    w.flush().map_err(|e| Error::io("predictions", e))?;
    Ok(())
}

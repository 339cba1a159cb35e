use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shapes(pred: &[Vec<f64>], truth_len: impl Iterator<Item = usize>, n_truth: usize) -> Result<()> {
    if pred.len() != n_truth {
        return Err(Error::DimensionMismatch(format!("{} predictions for {n_truth} targets", pred.len())));
    }
    for (i, (p, t)) in pred.iter().zip(truth_len).enumerate() {
        if p.len() != t {
            return Err(Error::DimensionMismatch(format!("row {i}: {} predicted years, {t} observed", p.len())));
        }
    }
    Ok(())
}

/// Mean squared error between predicted log counts and `ln(1 + counts)`,
/// averaged over years then papers.
pub fn prediction_loss(pred: &[Vec<f64>], counts: &[Vec<u64>]) -> Result<f64> {
    check_shapes(pred, counts.iter().map(Vec::len), counts.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("prediction batch".into()));
    }
    let mut total = 0.0;
    for (p, c) in pred.iter().zip(counts) {
        if p.is_empty() {
            return Err(Error::EmptyInput("prediction series".into()));
        }
        let per: f64 = p.iter().zip(c).map(|(x, &y)| (x - (y as f64 + 1.0).ln()).powi(2)).sum();
        total += per / p.len() as f64;
    }
    Ok(total / pred.len() as f64)
}

pub fn total_loss(pred_loss: f64, time_loss: f64, beta: f64) -> f64 {
    pred_loss + beta * time_loss
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("metric input".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("metric input".into()));
    }
    Ok((pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64).sqrt())
}

/// Per-year and pooled MAE/RMSE in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub papers: usize,
    pub mae: Vec<f64>,
    pub rmse: Vec<f64>,
    pub overall_mae: f64,
    pub overall_rmse: f64,
}

impl EvalReport {
    /// `pred` and `truth` are per-paper log series of equal length.
    pub fn from_series(split: &str, pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Self> {
        check_shapes(pred, truth.iter().map(Vec::len), truth.len())?;
        let horizon = pred.first().map(Vec::len).ok_or_else(|| Error::EmptyInput(format!("{split} split has no papers")))?;
        if pred.iter().any(|p| p.len() != horizon) {
            return Err(Error::DimensionMismatch("series of unequal length".into()));
        }
        let column = |rows: &[Vec<f64>], t: usize| rows.iter().map(|r| r[t]).collect::<Vec<_>>();
        let mut mae_y = Vec::with_capacity(horizon);
        let mut rmse_y = Vec::with_capacity(horizon);
        for t in 0..horizon {
            mae_y.push(mae(&column(pred, t), &column(truth, t))?);
            rmse_y.push(rmse(&column(pred, t), &column(truth, t))?);
        }
        let flat_p: Vec<f64> = pred.iter().flatten().copied().collect();
        let flat_t: Vec<f64> = truth.iter().flatten().copied().collect();
        Ok(Self {
            split: split.to_string(),
            papers: pred.len(),
            mae: mae_y,
            rmse: rmse_y,
            overall_mae: mae(&flat_p, &flat_t)?,
            overall_rmse: rmse(&flat_p, &flat_t)?,
        })
    }

    pub fn header(horizon: usize) -> Vec<String> {
        let mut h = vec!["split".to_string(), "metric".to_string()];
        h.extend((1..=horizon).map(|t| format!("year{t}")));
        h.push("overall".into());
        h
    }

    /// Two rows (`MAE`, `RMSE`) in the [`EvalReport::header`] layout.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let row = |name: &str, per: &[f64], overall: f64| {
            let mut r = vec![self.split.clone(), name.to_string()];
            r.extend(per.iter().map(|v| format!("{v:.6}")));
            r.push(format!("{overall:.6}"));
            r
        };
        vec![row("MAE", &self.mae, self.overall_mae), row("RMSE", &self.rmse, self.overall_rmse)]
    }

    /// Inverse of [`EvalReport::write_csv`]. Paper counts are not stored and
    /// read back as 0.
    pub fn read_csv(input: impl std::io::Read) -> Result<Vec<EvalReport>> {
        let mut r = csv::Reader::from_reader(input);
        let mut out: Vec<EvalReport> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |reason: String| Error::MalformedRecord {
                file: "report".into(),
                line: i + 2,
                reason,
            };
            if rec.len() < 4 {
                return Err(bad(format!("expected at least 4 columns, got {}", rec.len())));
            }
            let values: Vec<f64> = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}"))))
                .collect::<Result<_>>()?;
            let (per, overall) = values.split_at(values.len() - 1);
            let split = rec[0].to_string();
            if out.last().is_none_or(|r| r.split != split) {
                out.push(EvalReport {
                    split: split.clone(),
                    papers: 0,
                    mae: Vec::new(),
                    rmse: Vec::new(),
                    overall_mae: f64::NAN,
                    overall_rmse: f64::NAN,
                });
            }
            let report = out.last_mut().expect("pushed above");
            match &rec[1] {
                "MAE" => (report.mae, report.overall_mae) = (per.to_vec(), overall[0]),
                "RMSE" => (report.rmse, report.overall_rmse) = (per.to_vec(), overall[0]),
                other => return Err(bad(format!("unknown metric {other:?}"))),
            }
        }
        Ok(out)
    }

    pub fn write_csv(reports: &[EvalReport], out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let horizon = reports.first().map_or(0, |r| r.mae.len());
        w.write_record(Self::header(horizon))?;
        for r in reports {
            for row in r.rows() {
                w.write_record(row)?;
            }
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

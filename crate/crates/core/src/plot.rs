//! Static SVG figures: per-paper curve overlays, per-year error bars and a
//! 2-D projection of paper embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use plotters::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::train::EvalReport;

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

/// One row of a predictions CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub paper_id: i64,
    pub year_offset: usize,
    pub predicted_log_cumulative: f64,
    pub ground_truth_log_cumulative: Option<f64>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Predicted and observed curves for one paper.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePanel {
    pub paper: i64,
    pub predicted: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

pub fn panels(rows: &[PredictionRow]) -> Vec<CurvePanel> {
    let mut by: BTreeMap<i64, Vec<&PredictionRow>> = BTreeMap::new();
    for r in rows {
        by.entry(r.paper_id).or_default().push(r);
    }
    by.into_iter()
        .map(|(paper, mut rs)| {
            rs.sort_by_key(|r| r.year_offset);
            let truth: Option<Vec<f64>> = rs.iter().map(|r| r.ground_truth_log_cumulative).collect();
            CurvePanel {
                paper,
                predicted: rs.iter().map(|r| r.predicted_log_cumulative).collect(),
                truth,
            }
        })
        .collect()
}

/// A grid of small multiples, one per paper, with the observed series dashed.
pub fn plot_curves(panels: &[CurvePanel], path: &Path, columns: usize) -> Result<()> {
    if panels.is_empty() {
        return Err(Error::EmptyInput("no curves to plot".into()));
    }
    let columns = columns.clamp(1, panels.len());
    let rows = panels.len().div_ceil(columns);
    let root = SVGBackend::new(path, (260 * columns as u32, 200 * rows as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    for (area, panel) in root.split_evenly((rows, columns)).iter().zip(panels) {
        let len = panel.predicted.len();
        let top = panel
            .predicted
            .iter()
            .chain(panel.truth.iter().flatten())
            .fold(0.5f64, |m, v| m.max(*v))
            * 1.1;
        let mut chart = ChartBuilder::on(area)
            .caption(format!("paper {}", panel.paper), ("sans-serif", 14))
            .margin(8)
            .x_label_area_size(24)
            .y_label_area_size(32)
            .build_cartesian_2d(1f64..len.max(2) as f64, 0f64..top)
            .map_err(plot_err)?;
        chart.configure_mesh().x_labels(len.max(2)).y_labels(4).draw().map_err(plot_err)?;
        let xs = (1..=len).map(|t| t as f64);
        chart
            .draw_series(LineSeries::new(xs.clone().zip(panel.predicted.iter().copied()), BLUE.stroke_width(2)))
            .map_err(plot_err)?
            .label("predicted");
        if let Some(truth) = &panel.truth {
            chart
                .draw_series(DashedLineSeries::new(xs.clone().zip(truth.iter().copied()), 4, 3, RED.stroke_width(2)))
                .map_err(plot_err)?;
            chart
                .draw_series(xs.zip(truth.iter().copied()).map(|p| Circle::new(p, 3, RED.filled())))
                .map_err(plot_err)?;
        }
    }
    root.present().map_err(plot_err)
}

/// Per-year MAE and RMSE, one pair of lines per report.
pub fn plot_report(reports: &[EvalReport], path: &Path) -> Result<()> {
    let horizon = reports.first().map(|r| r.mae.len()).unwrap_or(0);
    if horizon == 0 {
        return Err(Error::EmptyInput("no report rows to plot".into()));
    }
    let top = reports
        .iter()
        .flat_map(|r| r.mae.iter().chain(&r.rmse))
        .fold(0.1f64, |m, v| m.max(*v))
        * 1.1;
    let root = SVGBackend::new(path, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("error by year after publication (log space)", ("sans-serif", 16))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(1f64..horizon.max(2) as f64, 0f64..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("year")
        .x_labels(horizon.max(2))
        .draw()
        .map_err(plot_err)?;
    for (i, r) in reports.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let xs = (1..=horizon).map(|t| t as f64);
        chart
            .draw_series(LineSeries::new(xs.clone().zip(r.mae.iter().copied()), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("{} MAE", r.split))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(2)));
        chart
            .draw_series(DashedLineSeries::new(xs.zip(r.rmse.iter().copied()), 4, 3, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(format!("{} RMSE", r.split))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(1)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Projection of row vectors onto their top two principal axes.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n < 2 || d == 0 {
        return Err(Error::EmptyInput("PCA needs at least two nonempty rows".into()));
    }
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged embedding rows".into()));
    }
    let mut m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mean);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::Singular)?;
    // Singular values are sorted in decreasing order.
    let axes = v_t.rows(0, 2.min(v_t.nrows())).transpose();
    let proj = &m * axes;
    Ok((0..n).map(|i| (proj[(i, 0)], if proj.ncols() > 1 { proj[(i, 1)] } else { 0.0 })).collect())
}

/// Scatter of projected embeddings, colored by an integer group label.
pub fn plot_embeddings(points: &[(f64, f64)], groups: &[i64], title: &str, path: &Path) -> Result<()> {
    if points.is_empty() || points.len() != groups.len() {
        return Err(Error::DimensionMismatch(format!("{} points, {} labels", points.len(), groups.len())));
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = ((hi - lo) * 0.05).max(1e-6);
        lo - pad..hi + pad
    };
    let root = SVGBackend::new(path, (640, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 16))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(span(|p| p.0), span(|p| p.1))
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("PC1").y_desc("PC2").draw().map_err(plot_err)?;
    let labels: Vec<i64> = {
        let mut l = groups.to_vec();
        l.sort();
        l.dedup();
        l
    };
    for (i, g) in labels.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(
                points
                    .iter()
                    .zip(groups)
                    .filter(|(_, h)| *h == g)
                    .map(|(p, _)| Circle::new(*p, 3, color.filled())),
            )
            .map_err(plot_err)?
            .label(g.to_string())
            .legend(move |(x, y)| Circle::new((x + 6, y), 3, color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_recovers_a_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        let p = pca_2d(&rows).unwrap();
        let spread = p.iter().map(|q| q.0).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(spread > 1.0);
        assert!(p.iter().all(|q| q.1.abs() < 1e-9));
    }

    #[test]
    fn panels_group_and_order_rows() {
        let rows = vec![
            PredictionRow { paper_id: 2, year_offset: 2, predicted_log_cumulative: 0.2, ground_truth_log_cumulative: None },
            PredictionRow { paper_id: 2, year_offset: 1, predicted_log_cumulative: 0.1, ground_truth_log_cumulative: None },
            PredictionRow { paper_id: 1, year_offset: 1, predicted_log_cumulative: 0.5, ground_truth_log_cumulative: Some(0.4) },
        ];
        let p = panels(&rows);
        assert_eq!(p[0].paper, 1);
        assert_eq!(p[0].truth, Some(vec![0.4]));
        assert_eq!(p[1].predicted, vec![0.1, 0.2]);
        assert_eq!(p[1].truth, None);
    }

    #[test]
    fn svg_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let panels = vec![CurvePanel { paper: 7, predicted: vec![0.1, 0.3, 0.5], truth: Some(vec![0.0, 0.4, 0.6]) }];
        let f = dir.path().join("c.svg");
        plot_curves(&panels, &f, 3).unwrap();
        assert!(std::fs::read_to_string(&f).unwrap().contains("<svg"));
        let g = dir.path().join("e.svg");
        plot_embeddings(&[(0.0, 1.0), (1.0, 0.0)], &[1, 2], "emb", &g).unwrap();
        assert!(g.exists());
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;

use super::runner::ExperimentResults;
use super::ExperimentError;
use crate::stats::{one_decimal, EvalStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Txt,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [
        ReportFormat::Json,
        ReportFormat::Csv,
        ReportFormat::Txt,
        ReportFormat::Svg,
    ];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Txt => "txt",
            ReportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportFormat::ALL
            .into_iter()
            .find(|f| f.extension() == s)
            .ok_or_else(|| ExperimentError::UnknownFormat(s.to_string()))
    }
}

/// Writes `report.<ext>` for each format into `dir` and returns the paths.
pub fn emit_report(
    results: &ExperimentResults,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(format!("report.{}", format.extension()));
        let body = match format {
            ReportFormat::Json => serde_json::to_string_pretty(results)?,
            ReportFormat::Csv => render_csv(results)?,
            ReportFormat::Txt => render_text(results),
            ReportFormat::Svg => render_svg(results)?,
        };
        fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}

/// Matrix as CSV: one row per training variant plus the random baseline,
/// with score and interval columns per evaluation variant. Curve bands
/// follow after a blank line.
pub fn render_csv(results: &ExperimentResults) -> Result<String, ExperimentError> {
    let m = &results.matrix;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let mut header = vec!["train".to_string()];
    for c in &m.col_labels {
        header.push(c.clone());
        header.push(format!("{c} ci_high"));
        header.push(format!("{c} ci_low"));
    }
    w.write_record(&header)?;
    let fields = |s: Option<&EvalStats>| match s {
        Some(s) => vec![format!("{}", s.mean), format!("{}", s.ci_high), format!("{}", s.ci_low)],
        None => vec!["failed".into(), String::new(), String::new()],
    };
    for (r, label) in m.row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        for cell in &m.cells[r] {
            rec.extend(fields(cell.stats.as_ref()));
        }
        w.write_record(&rec)?;
    }
    let mut rec = vec!["Random".to_string()];
    for c in &m.col_labels {
        rec.extend(fields(results.baseline(c)));
    }
    w.write_record(&rec)?;
    w.write_record([""])?;
    w.write_record(["variant", "timestep", "mean", "ci_low", "ci_high", "n"])?;
    for series in &results.curves {
        for p in &series.points {
            w.write_record([
                series.label.clone(),
                p.timestep.to_string(),
                p.mean.to_string(),
                p.ci_low.to_string(),
                p.ci_high.to_string(),
                p.n.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pad_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Aligned text tables. The best score in each evaluation column is
/// wrapped in `**`.
pub fn render_text(results: &ExperimentResults) -> String {
    let m = &results.matrix;
    let mut out = format!(
        "{} ({} runs x {} eval episodes, CI over {}, {} checkpoint)\n\n",
        results.plan.name,
        results.plan.n_runs,
        results.plan.eval_episodes,
        results.metadata.ci_over,
        results.metadata.checkpoint,
    );
    let level = (results.plan.stats.ci_level * 100.0).round();
    let mut rows = vec![{
        let mut h = vec!["Training".to_string()];
        for c in &m.col_labels {
            h.push(c.clone());
            h.push(String::new());
        }
        h
    }];
    rows.push({
        let mut h = vec![String::new()];
        for _ in &m.col_labels {
            h.push("Score".into());
            h.push(format!("{level}% CI"));
        }
        h
    });
    for (r, label) in m.row_labels.iter().enumerate() {
        let mut line = vec![label.clone()];
        for (c, cell) in m.cells[r].iter().enumerate() {
            match &cell.stats {
                Some(s) if m.is_best(r, c) => {
                    line.push(format!("**{}**", s.score_text()));
                    line.push(s.ci_text());
                }
                Some(s) => {
                    line.push(s.score_text());
                    line.push(s.ci_text());
                }
                None => {
                    line.push("failed".into());
                    line.push(cell.error.clone().unwrap_or_default());
                }
            }
        }
        rows.push(line);
    }
    let mut line = vec!["Random".to_string()];
    for c in &m.col_labels {
        match results.baseline(c) {
            Some(s) => {
                line.push(s.score_text());
                line.push(s.ci_text());
            }
            None => {
                line.push("failed".into());
                line.push(String::new());
            }
        }
    }
    rows.push(line);
    out.push_str(&pad_table(&rows));

    let failures: Vec<String> = m
        .cells
        .iter()
        .flatten()
        .filter(|c| !c.failed_runs.is_empty())
        .map(|c| format!("{} / {}: {} failed run(s)", c.row, c.col, c.failed_runs.len()))
        .collect();
    if !failures.is_empty() {
        out.push_str("\nFailed runs:\n");
        for f in failures {
            out.push_str(&format!("  {f}\n"));
        }
    }

    out.push_str("\nTraining curves (final checkpoint)\n");
    let mut rows = vec![vec![
        "Variant".to_string(),
        "Final".into(),
        format!("{level}% CI"),
        "IQR".into(),
        "CVaR".into(),
        "Converged".into(),
    ]];
    for s in &results.curves {
        let (score, ci, iqr, cvar) = match &s.final_stats {
            Some(f) => (
                f.score_text(),
                f.ci_text(),
                f.iqr
                    .map(|(a, b)| format!("[{}, {}]", one_decimal(a), one_decimal(b)))
                    .unwrap_or_else(|| "-".into()),
                format!("{} (a={})", one_decimal(f.cvar.1), f.cvar.0),
            ),
            None => ("-".into(), "-".into(), "-".into(), "-".into()),
        };
        let conv = match (&s.convergence, s.converged_at_end) {
            (Some(v), Some(end)) => match v.step_of_convergence {
                Some(step) => format!("from {step}{}", if end { "" } else { ", not at end" }),
                None => "no".into(),
            },
            _ => "curve too short".into(),
        };
        rows.push(vec![s.label.clone(), score, ci, iqr, cvar, conv]);
    }
    out.push_str(&pad_table(&rows));
    out
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(214, 39, 40),
    RGBColor(31, 119, 180),
    RGBColor(148, 103, 189),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(140, 86, 75),
];

/// Line chart of every training curve with its confidence band.
pub fn render_svg(results: &ExperimentResults) -> Result<String, ExperimentError> {
    let chart_err = |e: String| ExperimentError::Chart(e);
    let points = results.curves.iter().flat_map(|s| s.points.iter());
    let (mut x_max, mut y_min, mut y_max) = (1u64, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x_max = x_max.max(p.timestep);
        y_min = y_min.min(p.ci_low);
        y_max = y_max.max(p.ci_high);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (-1.0, 0.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(1.0);
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| chart_err(e.to_string()))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("{} training curves", results.plan.name), ("sans-serif", 20))
            .margin(15)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(0f64..x_max as f64, (y_min - pad)..(y_max + pad).min(0.0).max(y_min))
            .map_err(|e| chart_err(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc("timesteps")
            .y_desc("episodic return")
            .draw()
            .map_err(|e| chart_err(e.to_string()))?;
        for (i, series) in results.curves.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut band: Vec<(f64, f64)> = series.points.iter().map(|p| (p.timestep as f64, p.ci_high)).collect();
            band.extend(series.points.iter().rev().map(|p| (p.timestep as f64, p.ci_low)));
            chart
                .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
                .map_err(|e| chart_err(e.to_string()))?;
            chart
                .draw_series(LineSeries::new(
                    series.points.iter().map(|p| (p.timestep as f64, p.mean)),
                    color.stroke_width(2),
                ))
                .map_err(|e| chart_err(e.to_string()))?
                .label(series.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .position(SeriesLabelPosition::LowerRight)
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| chart_err(e.to_string()))?;
        root.present().map_err(|e| chart_err(e.to_string()))?;
    }
    Ok(svg)
}

//! Multi-run experiment harness: train/evaluate matrices, hyperparameter
//! ablations, random-policy baselines and report rendering.

mod plan;
mod report;
mod runner;

use std::io;

use thiserror::Error;

pub use plan::{ablation_variants, AltValues, ExperimentPlan, Labeled, PlanKind, Preset};
pub use report::{emit_report, render_csv, render_svg, render_text, ReportFormat};
pub use runner::{
    cell_seed, run_adversary_matrix, run_experiment, run_hparam_ablation, run_random_baseline, run_turn_order_matrix,
    slug, write_manifest, CellRecord, CellResult, CurvePoint, CurveSeries, ExperimentResults, Manifest, MatrixResult,
    ReportMetadata, RunOptions,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown plan name {0:?} (expected turn_order, adversary or hparam_ablation)")]
    UnknownPlan(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("unknown report format {0:?} (expected json, csv, txt or svg)")]
    UnknownFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("chart error: {0}")]
    Chart(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] crate::env::EnvError),
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::plan::{ExperimentPlan, Labeled, PlanKind};
use super::ExperimentError;
use crate::agents::random_blue;
use crate::env::EnvConfig;
use crate::ppo::{
    evaluate_policy, load_weights, save_weights, train, GreedyPolicy, Hyperparameters, PolicyParams, RunRecord,
};
use crate::seeding::{derive_seed, fingerprint};
use crate::stats::{converged_at_end, detect_convergence, mean, mean_ci, ConvergenceVerdict, EvalStats, StatsOptions};

/// Where and how to execute a plan.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Shared store of trained policies keyed by training configuration.
    /// Defaults to `<out_dir>/train`.
    pub cache_dir: Option<PathBuf>,
    pub jobs: usize,
    pub verbose: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            cache_dir: None,
            jobs: 1,
            verbose: false,
        }
    }

    fn cache(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("train"))
    }
}

/// Reproduction record written into every artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub seeds: Vec<u64>,
    pub config: serde_json::Value,
}

pub fn write_manifest(dir: &Path, kind: &str, seeds: Vec<u64>, config: &impl Serialize) -> Result<(), ExperimentError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        seeds,
        config: serde_json::to_value(config)?,
    };
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Filesystem-safe form of a variant label.
pub fn slug(label: &str) -> String {
    label
        .replace("->", "-to-")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Seed for evaluating run `run` of row `row` under column `col`.
pub fn cell_seed(plan_seed: u64, row: &str, col: &str, run: usize) -> u64 {
    derive_seed(&[&plan_seed.to_string(), row, col, &run.to_string()])
}

/// One evaluation of one trained (or random) policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub row: String,
    pub col: String,
    pub run: usize,
    pub train_seed: Option<u64>,
    pub train_fingerprint: Option<String>,
    /// Fingerprint of the evaluation setting (column config and episode
    /// count). A stored cell is reused only when it matches.
    #[serde(default)]
    pub eval_fingerprint: Option<String>,
    pub eval_seed: u64,
    pub eval_returns: Vec<f64>,
    pub mean_return: f64,
    /// Training-time evaluation curve of the policy, as `(timestep, score)`.
    pub train_curve: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub row: String,
    pub col: String,
    pub run_scores: Vec<f64>,
    pub stats: Option<EvalStats>,
    /// Runs that could not be trained or evaluated, with the reason.
    pub failed_runs: Vec<(usize, String)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<CellResult>>,
}

impl MatrixResult {
    pub fn cell(&self, row: &str, col: &str) -> Option<&CellResult> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        Some(&self.cells[r][c])
    }

    pub fn mean(&self, row: &str, col: &str) -> Option<f64> {
        self.cell(row, col)?.stats.as_ref().map(|s| s.mean)
    }

    /// Whether row `row` holds the highest mean in column `col` (ties all
    /// count as best).
    pub fn is_best(&self, row: usize, col: usize) -> bool {
        let best = self
            .cells
            .iter()
            .filter_map(|r| r[col].stats.as_ref().map(|s| s.mean))
            .fold(f64::NEG_INFINITY, f64::max);
        self.cells[row][col].stats.as_ref().is_some_and(|s| s.mean == best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: u64,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<CurvePoint>,
    /// Statistics over each run's last training-time evaluation.
    pub final_stats: Option<EvalStats>,
    pub convergence: Option<ConvergenceVerdict>,
    pub converged_at_end: Option<bool>,
}

impl CurveSeries {
    pub fn mean_curve(&self) -> Vec<(u64, f64)> {
        self.points.iter().map(|p| (p.timestep, p.mean)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool_version: String,
    pub ci_over: String,
    pub checkpoint: String,
    pub stats: StatsOptions,
    pub convergence_window: usize,
    pub convergence_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub plan: ExperimentPlan,
    pub matrix: MatrixResult,
    /// Uniform-random defender, one entry per evaluation column.
    pub random_baseline: Vec<(String, Option<EvalStats>)>,
    pub curves: Vec<CurveSeries>,
    /// Highest episodic return seen in any evaluation.
    pub max_episode_return: f64,
    pub metadata: ReportMetadata,
}

impl ExperimentResults {
    pub fn baseline(&self, col: &str) -> Option<&EvalStats> {
        self.random_baseline
            .iter()
            .find(|(c, _)| c == col)
            .and_then(|(_, s)| s.as_ref())
    }
}

/// One training configuration in a plan: a row of the result matrix.
struct Row<'a> {
    label: String,
    env: &'a EnvConfig,
    hp: &'a Hyperparameters,
}

#[derive(Serialize)]
struct TrainKey<'a> {
    env: &'a EnvConfig,
    hp: &'a Hyperparameters,
    eval_every: u64,
    eval_episodes: usize,
}

fn train_key<'a>(plan: &ExperimentPlan, row: &Row<'a>) -> TrainKey<'a> {
    TrainKey {
        env: row.env,
        hp: row.hp,
        eval_every: plan.eval_every,
        eval_episodes: plan.eval_episodes,
    }
}

fn eval_fingerprint(col: &EnvConfig, episodes: usize) -> String {
    fingerprint(&serde_json::to_vec(&(col, episodes)).expect("config serializes"))
}

struct Trained {
    record: RunRecord,
    params: PolicyParams,
    seed: u64,
    fingerprint: String,
}

/// Trains run `run` of a configuration, or loads it from the cache. Runs
/// that previously aborted are not retried.
fn train_cached(plan: &ExperimentPlan, row: &Row, run: usize, cache: &Path, verbose: bool) -> Result<Trained, String> {
    let key = train_key(plan, row);
    let fp = fingerprint(&serde_json::to_vec(&key).map_err(|e| e.to_string())?);
    let seed = derive_seed(&[&plan.seed.to_string(), &fp, &run.to_string()]);
    let dir = cache
        .join(format!("{}-s{}", &fp[..16], plan.seed))
        .join(run.to_string());
    let record_path = dir.join("run_record.json");
    if record_path.exists() {
        let record = RunRecord::load(&record_path).map_err(|e| e.to_string())?;
        if let Some(msg) = record.aborted {
            return Err(msg);
        }
        let params = load_weights(&dir, "weights").map_err(|e| e.to_string())?;
        return Ok(Trained {
            record,
            params,
            seed,
            fingerprint: fp,
        });
    }
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    write_manifest(&dir, "train", vec![seed], &key).map_err(|e| e.to_string())?;
    let save = |rec: &RunRecord| -> Result<(), String> {
        let json = serde_json::to_vec_pretty(rec).map_err(|e| e.to_string())?;
        write_atomic(&record_path, &json).map_err(|e| e.to_string())
    };
    match train(row.env, row.hp, seed, plan.eval_every, plan.eval_episodes) {
        Ok(mut record) => {
            let params = record.final_params.take().expect("completed run has params");
            save_weights(&params, &dir, "weights").map_err(|e| e.to_string())?;
            save(&record)?;
            if verbose {
                eprintln!(
                    "trained {} run {run}: final {:.1} in {:.0}s",
                    row.label,
                    record.final_score().unwrap_or(f64::NAN),
                    record.wall_time
                );
            }
            Ok(Trained {
                record,
                params,
                seed,
                fingerprint: fp,
            })
        }
        Err(boxed) => {
            let (err, record) = *boxed;
            save(&record)?;
            Err(err.to_string())
        }
    }
}

fn cell_dir(out: &Path, row: &str, col: &str, run: usize) -> PathBuf {
    out.join("cells").join(slug(row)).join(slug(col)).join(run.to_string())
}

fn load_cell(dir: &Path) -> Option<CellRecord> {
    let text = fs::read_to_string(dir.join("run_record.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn save_cell(dir: &Path, cell: &CellRecord) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("run_record.json"), &serde_json::to_vec_pretty(cell)?)
}

/// Runs `jobs` closures over `0..n` on a fixed pool of worker threads.
/// Results come back in index order regardless of completion order.
fn run_pool<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let value = f(i);
                slots.lock().expect("no poisoned workers")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect()
}

/// Outcome of one row/run job: per-column cells or the failure reason.
type RunOutcome = Result<(Vec<CellRecord>, Vec<(u64, f64)>), String>;

fn run_row_job(
    plan: &ExperimentPlan,
    opts: &RunOptions,
    row: &Row,
    cols: &[&Labeled<EnvConfig>],
    run: usize,
) -> RunOutcome {
    let mut cells = Vec::with_capacity(cols.len());
    let mut trained: Option<Trained> = None;
    let train_fp = fingerprint(&serde_json::to_vec(&train_key(plan, row)).map_err(|e| e.to_string())?);
    for col in cols {
        let dir = cell_dir(&opts.out_dir, &row.label, &col.label, run);
        let eval_fp = eval_fingerprint(&col.config, plan.eval_episodes);
        let eval_seed = cell_seed(plan.seed, &row.label, &col.label, run);
        if let Some(cell) = load_cell(&dir).filter(|c| {
            c.train_fingerprint.as_deref() == Some(train_fp.as_str())
                && c.eval_fingerprint.as_deref() == Some(eval_fp.as_str())
                && c.eval_seed == eval_seed
        }) {
            cells.push(cell);
            continue;
        }
        if trained.is_none() {
            trained = Some(train_cached(plan, row, run, &opts.cache(), opts.verbose)?);
        }
        let t = trained.as_ref().expect("trained above");
        let mut policy = GreedyPolicy {
            params: t.params.clone(),
        };
        let returns =
            evaluate_policy(&mut policy, &col.config, plan.eval_episodes, eval_seed).map_err(|e| e.to_string())?;
        let cell = CellRecord {
            row: row.label.clone(),
            col: col.label.clone(),
            run,
            train_seed: Some(t.seed),
            train_fingerprint: Some(t.fingerprint.clone()),
            eval_fingerprint: Some(eval_fp),
            eval_seed,
            mean_return: mean(&returns),
            eval_returns: returns,
            train_curve: t
                .record
                .eval_curve
                .iter()
                .map(|p| (p.timestep, p.mean_return))
                .collect(),
        };
        save_cell(&dir, &cell).map_err(|e| e.to_string())?;
        cells.push(cell);
    }
    let curve = cells.first().map(|c| c.train_curve.clone()).unwrap_or_default();
    Ok((cells, curve))
}

fn rows_of(plan: &ExperimentPlan) -> Vec<Row<'_>> {
    match plan.name {
        PlanKind::HparamAblation => plan
            .hparam_variants
            .iter()
            .map(|h| Row {
                label: h.label.clone(),
                env: &plan.env_variants[0].config,
                hp: &h.config,
            })
            .collect(),
        _ => plan
            .env_variants
            .iter()
            .map(|e| Row {
                label: e.label.clone(),
                env: &e.config,
                hp: &plan.hparam_variants[0].config,
            })
            .collect(),
    }
}

fn cols_of(plan: &ExperimentPlan) -> Vec<&Labeled<EnvConfig>> {
    match plan.name {
        PlanKind::HparamAblation => vec![&plan.env_variants[0]],
        _ => plan.env_variants.iter().collect(),
    }
}

fn stats_or_error(scores: &[f64], opts: &StatsOptions) -> (Option<EvalStats>, Option<String>) {
    match EvalStats::from_samples(scores, opts) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn curve_series(label: &str, curves: &[Vec<(u64, f64)>], plan: &ExperimentPlan) -> CurveSeries {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let points: Vec<CurvePoint> = (0..len)
        .map(|i| {
            let ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            let (m, lo, hi) = mean_ci(&ys, plan.stats.ci_level).unwrap_or_else(|_| {
                let m = mean(&ys);
                (m, m, m)
            });
            CurvePoint {
                timestep: curves[0][i].0,
                mean: m,
                ci_low: lo,
                ci_high: hi,
                n: ys.len(),
            }
        })
        .collect();
    let finals: Vec<f64> = curves.iter().filter_map(|c| c.last().map(|p| p.1)).collect();
    let mean_curve: Vec<(u64, f64)> = points.iter().map(|p| (p.timestep, p.mean)).collect();
    CurveSeries {
        label: label.to_string(),
        final_stats: EvalStats::from_samples(&finals, &plan.stats).ok(),
        convergence: detect_convergence(&mean_curve, plan.convergence_window, plan.convergence_epsilon).ok(),
        converged_at_end: converged_at_end(&mean_curve, plan.convergence_window, plan.convergence_epsilon).ok(),
        points,
    }
}

/// Evaluates the uniform-random defender for `n_runs` independent runs and
/// summarizes the per-run mean returns.
pub fn run_random_baseline(
    env_config: &EnvConfig,
    n_runs: usize,
    eval_episodes: usize,
    seed: u64,
    stats: &StatsOptions,
) -> Result<(EvalStats, Vec<CellRecord>), ExperimentError> {
    let mut records = Vec::with_capacity(n_runs);
    for run in 0..n_runs {
        let eval_seed = cell_seed(seed, "random", &env_config_label(env_config), run);
        let mut policy = random_blue(derive_seed(&["random-policy", &eval_seed.to_string()]));
        let returns = evaluate_policy(&mut policy, env_config, eval_episodes, eval_seed)?;
        records.push(CellRecord {
            row: "Random".into(),
            col: String::new(),
            run,
            train_seed: None,
            train_fingerprint: None,
            eval_fingerprint: Some(eval_fingerprint(env_config, eval_episodes)),
            eval_seed,
            mean_return: mean(&returns),
            eval_returns: returns,
            train_curve: Vec::new(),
        });
    }
    let scores: Vec<f64> = records.iter().map(|r| r.mean_return).collect();
    let stats = EvalStats::from_samples(&scores, stats).map_err(|e| ExperimentError::InvalidPlan(e.to_string()))?;
    Ok((stats, records))
}

fn env_config_label(cfg: &EnvConfig) -> String {
    fingerprint(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// Executes every cell of `plan` (skipping cells already on disk), plus the
/// random-defender baseline for each evaluation column.
pub fn run_experiment(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentResults, ExperimentError> {
    plan.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    write_atomic(&opts.out_dir.join("plan.json"), &serde_json::to_vec_pretty(plan)?)?;
    write_manifest(&opts.out_dir, plan.name.name(), vec![plan.seed], plan)?;

    let rows = rows_of(plan);
    let cols = cols_of(plan);
    let n_jobs = rows.len() * plan.n_runs;
    let outcomes = run_pool(n_jobs, opts.jobs, |i| {
        run_row_job(plan, opts, &rows[i / plan.n_runs], &cols, i % plan.n_runs)
    });

    let mut max_return = f64::NEG_INFINITY;
    let mut cells = Vec::with_capacity(rows.len());
    let mut curves = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let outcomes = &outcomes[r * plan.n_runs..(r + 1) * plan.n_runs];
        let failed: Vec<(usize, String)> = outcomes
            .iter()
            .enumerate()
            .filter_map(|(run, o)| o.as_ref().err().map(|e| (run, e.clone())))
            .collect();
        let ok: Vec<_> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let mut row_cells = Vec::with_capacity(cols.len());
        for (c, col) in cols.iter().enumerate() {
            let scores: Vec<f64> = ok.iter().map(|(cells, _)| cells[c].mean_return).collect();
            for (cells, _) in &ok {
                max_return = cells[c].eval_returns.iter().copied().fold(max_return, f64::max);
            }
            let (stats, error) = stats_or_error(&scores, &plan.stats);
            row_cells.push(CellResult {
                row: row.label.clone(),
                col: col.label.clone(),
                run_scores: scores,
                stats,
                failed_runs: failed.clone(),
                error,
            });
        }
        cells.push(row_cells);
        let run_curves: Vec<Vec<(u64, f64)>> = ok.iter().map(|(_, c)| c.clone()).collect();
        for c in &run_curves {
            max_return = c.iter().map(|p| p.1).fold(max_return, f64::max);
        }
        curves.push(curve_series(&row.label, &run_curves, plan));
    }

    let mut random_baseline = Vec::with_capacity(cols.len());
    for col in &cols {
        let (stats, records) =
            run_random_baseline(&col.config, plan.n_runs, plan.eval_episodes, plan.seed, &plan.stats)?;
        for mut rec in records {
            rec.col = col.label.clone();
            max_return = rec.eval_returns.iter().copied().fold(max_return, f64::max);
            save_cell(&cell_dir(&opts.out_dir, "Random", &col.label, rec.run), &rec)?;
        }
        random_baseline.push((col.label.clone(), Some(stats)));
    }

    Ok(ExperimentResults {
        plan: plan.clone(),
        matrix: MatrixResult {
            row_labels: rows.iter().map(|r| r.label.clone()).collect(),
            col_labels: cols.iter().map(|c| c.label.clone()).collect(),
            cells,
        },
        random_baseline,
        curves,
        max_episode_return: max_return,
        metadata: ReportMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ci_over: "per-run mean return over evaluation episodes".into(),
            checkpoint: "final policy".into(),
            stats: plan.stats,
            convergence_window: plan.convergence_window,
            convergence_epsilon: plan.convergence_epsilon,
        },
    })
}

fn require_kind(plan: &ExperimentPlan, kind: PlanKind) -> Result<(), ExperimentError> {
    if plan.name == kind {
        Ok(())
    } else {
        Err(ExperimentError::InvalidPlan(format!(
            "expected a {kind} plan, got {}",
            plan.name
        )))
    }
}

/// Trains one row per turn order and evaluates each under every order.
pub fn run_turn_order_matrix(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentResults, ExperimentError> {
    require_kind(plan, PlanKind::TurnOrder)?;
    run_experiment(plan, opts)
}

/// Trains one row per attacker and evaluates each against every attacker.
pub fn run_adversary_matrix(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentResults, ExperimentError> {
    require_kind(plan, PlanKind::Adversary)?;
    run_experiment(plan, opts)
}

/// Trains each hyperparameter variant and returns its curve with CI band.
pub fn run_hparam_ablation(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ExperimentResults, ExperimentError> {
    require_kind(plan, PlanKind::HparamAblation)?;
    run_experiment(plan, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("R->B"), "R-to-B");
        assert_eq!(slug("Alt Learning Rate"), "Alt_Learning_Rate");
        assert_eq!(slug("B-line"), "B-line");
    }

    #[test]
    fn ties_for_best_are_all_marked() {
        let cell = |scores: &[f64]| CellResult {
            row: String::new(),
            col: String::new(),
            run_scores: scores.to_vec(),
            stats: EvalStats::from_samples(scores, &StatsOptions::default()).ok(),
            failed_runs: Vec::new(),
            error: None,
        };
        let m = MatrixResult {
            row_labels: vec!["a".into(), "b".into(), "c".into()],
            col_labels: vec!["x".into()],
            cells: vec![
                vec![cell(&[0.0, 0.0])],
                vec![cell(&[-3.0, -1.0])],
                vec![cell(&[0.0, 0.0])],
            ],
        };
        assert_eq!((0..3).map(|r| m.is_best(r, 0)).collect::<Vec<_>>(), [true, false, true]);
    }

    #[test]
    fn pool_preserves_order() {
        let out = run_pool(10, 3, |i| i * i);
        assert_eq!(out, (0..10).map(|i| i * i).collect::<Vec<_>>());
        assert!(run_pool(0, 4, |i| i).is_empty());
    }

    #[test]
    fn cell_seeds_differ_by_coordinate() {
        let a = cell_seed(0, "R->B", "B->R", 0);
        assert_ne!(a, cell_seed(0, "B->R", "R->B", 0));
        assert_ne!(a, cell_seed(0, "R->B", "B->R", 1));
        assert_ne!(a, cell_seed(1, "R->B", "B->R", 0));
    }

    #[test]
    fn random_baseline_is_deterministic() {
        let opts = StatsOptions::default();
        let (a, _) = run_random_baseline(&EnvConfig::default(), 3, 4, 5, &opts).unwrap();
        let (b, _) = run_random_baseline(&EnvConfig::default(), 3, 4, 5, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.mean < 0.0);
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! The experiment criteria train real agents (desk scale: 5 runs × 500k
//! steps per configuration; full scale: 20 runs × 2.5M steps). Results are
//! cached under `target/acceptance` (override with `ACD_ACCEPTANCE_DIR`), so
//! only the first invocation is slow. `ACD_ACCEPTANCE_JOBS` sets the number
//! of worker threads (default: all cores).

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use acd_core::agents::RedPolicyName;
use acd_core::env::EnvConfig;
use acd_core::experiments::{
    emit_report, run_adversary_matrix, run_hparam_ablation, run_turn_order_matrix, ExperimentPlan, ExperimentResults,
    PlanKind, Preset, ReportFormat, RunOptions,
};
use acd_core::ppo::{compute_gae, evaluate_policy, loss_and_grad, Architecture, LossCoefficients};
use acd_core::selftest;
use acd_core::stats::{converged_at_end, cvar, mean_ci, EvalStats};
use common::{batch, brute_force_gae, max_fd_error, toy_instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn work_dir() -> PathBuf {
    match std::env::var_os("ACD_ACCEPTANCE_DIR") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_TARGET_TMPDIR"))
            .parent()
            .expect("target dir")
            .join("acceptance"),
    }
}

fn jobs() -> usize {
    std::env::var("ACD_ACCEPTANCE_JOBS")
        .ok()
        .and_then(|j| j.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_plan(name: &str, plan: &ExperimentPlan) -> Result<ExperimentResults, String> {
    let root = work_dir();
    let opts = RunOptions {
        cache_dir: Some(root.join("train")),
        jobs: jobs(),
        verbose: true,
        ..RunOptions::new(root.join(name))
    };
    let results = match plan.name {
        PlanKind::TurnOrder => run_turn_order_matrix(plan, &opts),
        PlanKind::Adversary => run_adversary_matrix(plan, &opts),
        PlanKind::HparamAblation => run_hparam_ablation(plan, &opts),
    }
    .map_err(|e| e.to_string())?;
    emit_report(&results, &opts.out_dir, &ReportFormat::ALL).map_err(|e| e.to_string())?;
    Ok(results)
}

fn cell<'a>(r: &'a ExperimentResults, row: &str, col: &str) -> Result<&'a EvalStats, String> {
    r.matrix
        .cell(row, col)
        .and_then(|c| c.stats.as_ref())
        .ok_or_else(|| format!("no statistics for cell {row}/{col}"))
}

fn score_bound(experiments: &[&Result<ExperimentResults, String>]) -> Verdict {
    let mut max = f64::NEG_INFINITY;
    for check in selftest::run_all(None) {
        if check.name == "score bound" && !check.passed {
            return Err(format!("selftest traces: {}", check.detail));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for red in [
        RedPolicyName::BLine,
        RedPolicyName::Meander,
        RedPolicyName::MixedPerEpisode,
    ] {
        let cfg = EnvConfig {
            red_policy_name: red,
            ..EnvConfig::default()
        };
        let mut policy = acd_core::agents::random_blue(rng.random());
        let returns = evaluate_policy(&mut policy, &cfg, 50, rng.random()).map_err(|e| e.to_string())?;
        max = returns.iter().copied().fold(max, f64::max);
    }
    let mut covered = 0;
    for r in experiments.iter().filter_map(|r| r.as_ref().ok()) {
        max = max.max(r.max_episode_return);
        covered += 1;
    }
    ensure(
        max <= 0.0,
        format!("max episodic return {max} over selftest, random traces and {covered} experiments"),
    )
}

fn gradient() -> Verdict {
    let coef = LossCoefficients {
        clip_range: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.01,
    };
    let mut worst: f64 = 0.0;
    for arch in [Architecture::Separate, Architecture::Shared] {
        for seed in 0..10 {
            let (mut p, toy) = toy_instance(seed, arch);
            let (_, grad) = loss_and_grad(&p, &batch(&toy), coef);
            worst = worst.max(max_fd_error(&mut p, &toy, coef, &grad, 1e-5));
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e} (limit 1e-4)"))
}

fn gae() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Integer-valued data keeps every sum exact, so identities are checked
    // with equality.
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let r: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-10..=0))).collect();
        let v: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-30..=0))).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let last = f64::from(rng.random_range(-30..=0));
        let (adv, _) = compute_gae(&r, &v, &d, last, 1.0, 0.0);
        for t in 0..n {
            let next = if d[t] {
                0.0
            } else if t + 1 < n {
                v[t + 1]
            } else {
                last
            };
            if adv[t] != r[t] + next - v[t] {
                return Err(format!("one-step identity fails at t={t}"));
            }
        }
        let (_, ret) = compute_gae(&r, &v, &d, last, 1.0, 1.0);
        for (t, &got) in ret.iter().enumerate() {
            let mut g = 0.0;
            let mut k = t;
            loop {
                g += r[k];
                if d[k] {
                    break;
                }
                k += 1;
                if k == n {
                    g += last;
                    break;
                }
            }
            if got != g {
                return Err(format!("monte carlo identity fails at t={t}: {got} vs {g}"));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let r: Vec<f64> = (0..10).map(|_| rng.random_range(-10.0..0.0)).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(-50.0..0.0)).collect();
        let d: Vec<bool> = (0..10).map(|_| rng.random_bool(0.2)).collect();
        let last = rng.random_range(-50.0..0.0);
        let (gamma, lambda) = (rng.random_range(0.8..1.0), rng.random_range(0.0..1.0));
        let (adv, _) = compute_gae(&r, &v, &d, last, gamma, lambda);
        let oracle = brute_force_gae(&r, &v, &d, last, gamma, lambda);
        worst = adv
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    ensure(
        worst <= 1e-10,
        format!("identities exact; max brute-force deviation {worst:.1e} (limit 1e-10)"),
    )
}

fn without_wall_time(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v.as_object_mut().ok_or("record is not an object")?.remove("wall_time");
    Ok(v.to_string())
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = serde_json::json!({
        "hparams": {"n_steps": 512, "total_timesteps": 4096},
        "seeds": [11],
        "eval_every": 1024,
        "eval_episodes": 5
    });
    let cfg_path = tmp.path().join("train.json");
    fs::write(&cfg_path, cfg.to_string()).map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = Command::new(std::env::current_exe().map_err(|e| e.to_string())?)
            .arg(AS_CLI)
            .arg("train")
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("train failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
        let dir = out.join("seed-11");
        let weights = fs::read(dir.join("weights.bin")).map_err(|e| e.to_string())?;
        records.push((without_wall_time(&dir.join("run_record.json"))?, weights));
    }
    ensure(
        records[0] == records[1],
        format!(
            "two train invocations: records identical = {}, weights identical = {}",
            records[0].0 == records[1].0,
            records[0].1 == records[1].1
        ),
    )
}

/// Two-sided 95% Student-t critical value, 19 degrees of freedom.
const T_975_DF19: f64 = 2.093_024_054_408_263;

fn statistics() -> Verdict {
    let normal = Normal::new(-25.0, 8.0).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let xs: Vec<f64> = (0..20).map(|_| normal.sample(&mut rng)).collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let s = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt();
    let half = T_975_DF19 * s / n.sqrt();
    let (_, lo, hi) = mean_ci(&xs, 0.95).map_err(|e| e.to_string())?;
    let t_err = (lo - (m - half)).abs().max((hi - (m + half)).abs());
    if t_err >= 1e-9 {
        return Err(format!("t-interval off by {t_err:e}"));
    }

    let truth = Normal::new(-60.0, 15.0).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut hits = 0;
    for _ in 0..1000 {
        let xs: Vec<f64> = (0..20).map(|_| truth.sample(&mut rng)).collect();
        let (_, lo, hi) = mean_ci(&xs, 0.95).map_err(|e| e.to_string())?;
        hits += usize::from(lo <= -60.0 && -60.0 <= hi);
    }
    let coverage = hits as f64 / 10.0;
    if !(93.0..=97.0).contains(&coverage) {
        return Err(format!("coverage {coverage:.1}% outside 95 ± 2"));
    }

    let tail: Vec<f64> = (0..37).map(|_| -rng.random_range(0.0..100.0)).collect();
    let all = cvar(&tail, 1.0).map_err(|e| e.to_string())?;
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    ensure(
        (all - mean).abs() <= 1e-12 * mean.abs(),
        format!("t error {t_err:.1e}, coverage {coverage:.1}%, CVaR(1) = {all:.4} vs mean {mean:.4}"),
    )
}

fn learning_signal(r: &Result<ExperimentResults, String>) -> Verdict {
    let r = r.as_ref().map_err(Clone::clone)?;
    let trained = cell(r, "B->R", "B->R")?;
    let random = r.baseline("B->R").ok_or("no random baseline")?;
    let gap = trained.mean - random.mean;
    let margin = trained.half_width() + random.half_width();
    ensure(
        gap > margin,
        format!(
            "trained {:.1} vs random {:.1}: gap {gap:.1}, CI half-widths sum {margin:.1}",
            trained.mean, random.mean
        ),
    )
}

fn worst_cell(r: &ExperimentResults, row: &str) -> Result<f64, String> {
    r.matrix
        .col_labels
        .iter()
        .map(|c| cell(r, row, c).map(|s| s.mean))
        .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
}

fn turn_order(r: &Result<ExperimentResults, String>) -> Verdict {
    let r = r.as_ref().map_err(Clone::clone)?;
    let diag = cell(r, "B->R", "B->R")?.mean;
    let cross = cell(r, "B->R", "R->B")?.mean;
    let mixed_worst = worst_cell(r, "Mixed")?;
    let blue_first_worst = worst_cell(r, "B->R")?;
    ensure(
        diag > cross && mixed_worst > blue_first_worst,
        format!(
            "B->R row: diagonal {diag:.1} vs R->B eval {cross:.1}; worst cell Mixed row {mixed_worst:.1} vs B->R row {blue_first_worst:.1}"
        ),
    )
}

fn adversary(r: &Result<ExperimentResults, String>) -> Verdict {
    let r = r.as_ref().map_err(Clone::clone)?;
    let diag = cell(r, "B-line", "B-line")?.mean;
    let vs_meander = cell(r, "B-line", "Meander")?.mean;
    let mixed_col: Vec<(String, f64)> = r
        .matrix
        .row_labels
        .iter()
        .map(|row| cell(r, row, "Mixed").map(|s| (row.clone(), s.mean)))
        .collect::<Result<_, _>>()?;
    let mixed_row = mixed_col
        .iter()
        .find(|(row, _)| row == "Mixed")
        .ok_or("no Mixed row")?
        .1;
    let best_other = mixed_col
        .iter()
        .filter(|(row, _)| row != "Mixed")
        .map(|(_, m)| *m)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(
        vs_meander < diag && mixed_row > best_other,
        format!(
            "B-line row: diagonal {diag:.1} vs Meander {vs_meander:.1}; Mixed column: Mixed-trained {mixed_row:.1} vs best other {best_other:.1}"
        ),
    )
}

fn hparam_sensitivity(r: &Result<ExperimentResults, String>) -> Verdict {
    let r = r.as_ref().map_err(Clone::clone)?;
    let finals = |label: &str| {
        r.curves
            .iter()
            .find(|c| c.label == label)
            .and_then(|c| c.final_stats.clone())
            .ok_or_else(|| format!("no final statistics for {label}"))
    };
    let default = finals("Default HPs")?;
    let mut parts = vec![format!("Default {}", default.score_text())];
    let mut any = false;
    for c in r.curves.iter().filter(|c| c.label != "Default HPs") {
        let s = finals(&c.label)?;
        let disjoint = s.ci_disjoint(&default);
        any |= disjoint;
        parts.push(format!(
            "{} {}{}",
            c.label,
            s.score_text(),
            if disjoint { " disjoint" } else { "" }
        ));
    }
    ensure(any, parts.join("; "))
}

fn convergence(r: &Result<ExperimentResults, String>) -> Verdict {
    let r = r.as_ref().map_err(Clone::clone)?;
    let (window, eps) = (r.plan.convergence_window, r.plan.convergence_epsilon);
    let curve = r.curves.first().ok_or("no curve")?.mean_curve();
    let flagged = converged_at_end(&curve, window, eps).map_err(|e| e.to_string())?;
    let ramp: Vec<(u64, f64)> = (0..=50).map(|i| (i * 50_000, -150.0 + 2.5 * i as f64)).collect();
    let ramp_flagged = converged_at_end(&ramp, window, eps).map_err(|e| e.to_string())?;
    let last = curve.last().map_or(f64::NAN, |p| p.1);
    ensure(
        flagged && !ramp_flagged,
        format!(
            "full-scale Default curve ({} points, final {last:.1}) converged: {flagged}; rising ramp flagged: {ramp_flagged}",
            curve.len()
        ),
    )
}

fn desk(kind: PlanKind) -> Result<ExperimentResults, String> {
    run_plan(kind.name(), &ExperimentPlan::preset(kind, Preset::Desk))
}

fn full_default() -> Result<ExperimentResults, String> {
    let mut plan = ExperimentPlan::preset(PlanKind::HparamAblation, Preset::Full);
    plan.hparam_variants.truncate(1);
    run_plan("full_default", &plan)
}

/// First argument that makes this binary behave as the `acd` CLI, so the
/// determinism check runs two real CLI processes.
const AS_CLI: &str = "--as-acd-cli";

fn main() {
    let mut args = std::env::args_os();
    if args.nth(1).is_some_and(|a| a == AS_CLI) {
        std::process::exit(acd_core::cli::run(std::iter::once("acd".into()).chain(args)));
    }
    let turn = desk(PlanKind::TurnOrder);
    let adv = desk(PlanKind::Adversary);
    let ablation = desk(PlanKind::HparamAblation);
    let full = full_default();

    let criteria: Vec<(&str, Verdict)> = vec![
        ("score bound", score_bound(&[&turn, &adv, &ablation, &full])),
        ("gradient correctness", gradient()),
        ("gae identities", gae()),
        ("determinism", determinism()),
        ("statistics", statistics()),
        ("learning signal", learning_signal(&turn)),
        ("turn-order pattern", turn_order(&turn)),
        ("adversary pattern", adversary(&adv)),
        ("hyperparameter sensitivity", hparam_sensitivity(&ablation)),
        ("convergence detection", convergence(&full)),
    ];
    let mut failed = 0;
    for (i, (name, verdict)) in criteria.iter().enumerate() {
        match verdict {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Command-line front end. `run` returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agents::{random_blue, BluePolicy, SleepBlue};
use crate::env::EnvConfig;
use crate::experiments::{
    emit_report, run_experiment, write_manifest, ExperimentPlan, ExperimentResults, PlanKind, Preset, ReportFormat,
    RunOptions,
};
use crate::ppo::{evaluate_policy, load_weights, save_weights, train_with_fault, GreedyPolicy, Hyperparameters};
use crate::selftest::{self, Fault};
use crate::stats::{EvalStats, StatsOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ACD_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "acd",
    version,
    about = "Autonomous cyber defense training and evaluation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train PPO defenders, one per seed.
    Train(TrainArgs),
    /// Evaluate a saved, random or sleeping defender.
    Evaluate(EvaluateArgs),
    /// Run an experiment plan and write its report.
    Ablate(AblateArgs),
    /// Re-render a saved report.json in other formats.
    Report(ReportArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $ACD_OUT_DIR or ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Poison the weights before the update starting at this timestep.
    #[arg(long, hide = true)]
    pub inject_fault: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory holding weights.bin and weights.json.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Built-in policy to evaluate instead of saved weights.
    #[arg(long, value_parser = ["random", "sleep"])]
    pub policy: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Plan name used with --preset when no --config is given.
    #[arg(long)]
    pub plan: Option<String>,
    #[arg(long, value_parser = ["smoke", "desk", "full"])]
    pub preset: Option<String>,
    /// Shared directory of trained policies, reused across plans.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Comma-separated report formats.
    #[arg(long, default_value = "json,csv,txt,svg")]
    pub formats: String,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by `ablate`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "txt,csv,svg")]
    pub formats: String,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, hide = true, value_parser = ["gradient"])]
    pub inject_fault: Option<String>,
}

/// Training configuration file for `acd train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub hparams: Hyperparameters,
    pub seeds: Vec<u64>,
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            hparams: Hyperparameters::default(),
            seeds: vec![0],
            eval_every: 50_000,
            eval_episodes: 100,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn out_dir(arg: &Option<PathBuf>) -> PathBuf {
    arg.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn parse_formats(list: &str) -> Result<Vec<ReportFormat>, CliError> {
    list.split(',')
        .map(|f| ReportFormat::from_str(f.trim()).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Selftest(a) => cmd_selftest(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Runtime(m) => eprintln!("failed: {m}"),
            }
            e.code()
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut cfg: TrainConfig = match &args.common.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    cfg.hparams.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if cfg.seeds.is_empty() {
        return Err(CliError::Usage("no seeds given".into()));
    }
    let out = out_dir(&args.common.out);
    fs::create_dir_all(&out).map_err(runtime)?;
    write_manifest(&out, "train", cfg.seeds.clone(), &cfg).map_err(runtime)?;

    let mut failures = Vec::new();
    for &seed in &cfg.seeds {
        let dir = out.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir).map_err(runtime)?;
        let run_cfg = TrainConfig {
            seeds: vec![seed],
            ..cfg.clone()
        };
        write_manifest(&dir, "train", vec![seed], &run_cfg).map_err(runtime)?;
        let outcome = train_with_fault(
            &cfg.env,
            &cfg.hparams,
            seed,
            cfg.eval_every,
            cfg.eval_episodes,
            args.inject_fault,
        );
        match outcome {
            Ok(mut record) => {
                let params = record.final_params.take().expect("completed run has params");
                save_weights(&params, &dir, "weights").map_err(runtime)?;
                record.save(&dir.join("run_record.json")).map_err(runtime)?;
                println!(
                    "seed {seed}: final score {:.1} after {} steps ({:.1}s)",
                    record.final_score().unwrap_or(f64::NAN),
                    record.timesteps,
                    record.wall_time
                );
            }
            Err(boxed) => {
                let (err, record) = *boxed;
                record.save(&dir.join("run_record.json")).map_err(runtime)?;
                eprintln!("seed {seed}: aborted at {} steps: {err}", record.timesteps);
                failures.push(seed);
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("numeric abort in seed(s) {failures:?}")))
    }
}

#[derive(Debug, Serialize)]
struct EvaluationOutput {
    policy: String,
    seed: u64,
    env: EnvConfig,
    returns: Vec<f64>,
    stats: Option<EvalStats>,
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let env: EnvConfig = match &args.common.config {
        Some(p) => read_json(p)?,
        None => EnvConfig::default(),
    };
    env.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = args.common.seed.unwrap_or(0);
    let (name, mut policy): (String, Box<dyn BluePolicy>) = match (&args.weights, args.policy.as_deref()) {
        (Some(dir), None) => {
            let params =
                load_weights(dir, "weights").map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
            (dir.display().to_string(), Box::new(GreedyPolicy { params }))
        }
        (None, Some("random")) => ("random".into(), Box::new(random_blue(seed))),
        (None, Some("sleep")) => ("sleep".into(), Box::new(SleepBlue)),
        _ => return Err(CliError::Usage("give exactly one of --weights or --policy".into())),
    };
    let returns = evaluate_policy(policy.as_mut(), &env, args.episodes, seed).map_err(runtime)?;
    let stats = EvalStats::from_samples(&returns, &StatsOptions::default()).ok();
    if let Some(s) = &stats {
        println!(
            "{name}: {} {} over {} episodes",
            s.score_text(),
            s.ci_text(),
            returns.len()
        );
    }
    let out = out_dir(&args.common.out);
    fs::create_dir_all(&out).map_err(runtime)?;
    let output = EvaluationOutput {
        policy: name,
        seed,
        env,
        returns,
        stats,
    };
    write_manifest(&out, "evaluate", vec![seed], &output).map_err(runtime)?;
    fs::write(
        out.join("evaluation.json"),
        serde_json::to_string_pretty(&output).map_err(runtime)?,
    )
    .map_err(runtime)?;
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let mut plan: ExperimentPlan = match (&args.common.config, &args.plan) {
        (Some(p), None) => read_json(p)?,
        (None, Some(name)) => {
            let kind = PlanKind::from_str(name).map_err(|e| CliError::Usage(e.to_string()))?;
            let preset = Preset::from_str(args.preset.as_deref().unwrap_or("desk"))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            ExperimentPlan::preset(kind, preset)
        }
        _ => return Err(CliError::Usage("give exactly one of --config or --plan".into())),
    };
    if let Some(seed) = args.common.seed {
        plan.seed = seed;
    }
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let formats = parse_formats(&args.formats)?;
    let out = out_dir(&args.common.out);
    let opts = RunOptions {
        out_dir: out.clone(),
        cache_dir: args.cache.clone(),
        jobs: args.common.jobs as usize,
        verbose: !args.quiet,
    };
    let results = run_experiment(&plan, &opts).map_err(runtime)?;
    for path in emit_report(&results, &out, &formats).map_err(runtime)? {
        println!("wrote {}", path.display());
    }
    if !args.quiet {
        print!("{}", crate::experiments::render_text(&results));
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let results: ExperimentResults = read_json(&args.results)?;
    let formats = parse_formats(&args.formats)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.results.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&out).map_err(runtime)?;
    write_manifest(&out, "report", vec![results.plan.seed], &results.plan).map_err(runtime)?;
    for path in emit_report(&results, &out, &formats).map_err(runtime)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_selftest(args: &SelftestArgs) -> Result<(), CliError> {
    let fault = args.inject_fault.as_deref().map(|_| Fault::Gradient);
    let results = selftest::run_all(fault);
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{failed} check(s) failed")))
    }
}

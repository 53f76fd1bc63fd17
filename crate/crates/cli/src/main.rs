mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::BackendSpec;

/// Few-shot grounded high-level planning: sampling, static plan accuracy,
/// closed-loop episodes and leave-one-out prompt selection.
#[derive(Parser)]
#[command(name = "llm-planner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a stratified sample of a dataset.
    Sample(SampleArgs),
    /// Plan each test task once and score exact-match plan accuracy.
    EvalStatic(EvalStaticArgs),
    /// Run closed-loop episodes in the simulator.
    Run(RunArgs),
    /// Rank prompt variants by leave-one-out accuracy and sweep k by training size.
    Loocv(LoocvArgs),
    /// Write the bundled scenes, datasets and scenarios.
    GenAssets(GenAssetsArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// Input JSONL dataset.
    #[arg(long)]
    data: PathBuf,
    /// Sample size.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by the planning commands. Each overrides the config file.
#[derive(Args)]
struct PlanArgs {
    /// TOML config file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// oracle, scripted:<file>, http, replay:<dir> or record:<dir> [default: oracle]
    #[arg(long)]
    backend: Option<BackendSpec>,
    /// Training examples to retrieve from [default: assets/train.jsonl]
    #[arg(long)]
    train: Option<PathBuf>,
    /// In-context examples per prompt [default: 9]
    #[arg(long)]
    k: Option<usize>,
    /// Bias added to every allowed action and object token [default: 0.1]
    #[arg(long = "logit-bias")]
    logit_bias: Option<f64>,
    /// Sampling temperature [default: 0]
    #[arg(long)]
    temperature: Option<f64>,
    /// Add step-by-step instructions to prompts and retrieval queries.
    #[arg(long)]
    use_steps: bool,
    /// Worker threads for episodes and folds [default: 1]
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for episodes, sampling and random example selection [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalStaticArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Test JSONL dataset [default: assets/tasks.jsonl]
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Tasks to run [default: assets/tasks.jsonl]
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Directory of scene files [default: assets/scenes]
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// Re-plan on failures and intervals (the default).
    #[arg(long, conflicts_with = "static_mode")]
    dynamic: bool,
    /// Plan once, never re-plan.
    #[arg(long = "static")]
    static_mode: bool,
    /// Steps without a completed subgoal before re-planning [default: 20]
    #[arg(long)]
    replan_interval: Option<u32>,
}

#[derive(Args)]
struct LoocvArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// TOML file with `[[variant]]` tables; goal-only and with-steps when absent.
    #[arg(long)]
    variants: Option<PathBuf>,
    /// Sweep values of k.
    #[arg(long, value_delimiter = ',', default_value = "1,3,9")]
    ks: Vec<usize>,
    /// Sweep training-set sizes.
    #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
    train_sizes: Vec<usize>,
}

#[derive(Args)]
struct GenAssetsArgs {
    #[arg(long, default_value = "assets")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => commands::sample(&a),
        Command::EvalStatic(a) => commands::eval_static(&a),
        Command::Run(a) => commands::run(&a),
        Command::Loocv(a) => commands::loocv(&a),
        Command::GenAssets(a) => commands::gen_assets(&a),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

//! Command-line entry point: one executable driving the whole pipeline
//! from a single JSON configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use har_select::cli::{self, RunConfig};
use har_select::llm_bridge::LlmMode;
use har_select::selector::Strategy;

#[derive(Parser)]
#[command(
    name = "har-select",
    version,
    about = "LLM-guided exemplar selection for few-shot human activity recognition"
)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults to the built-in synthetic config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output root directory for run artifacts.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Override the configured selection strategy
    /// (llm_guided | random | herding | k_center).
    #[arg(long, global = true)]
    strategy: Option<Strategy>,

    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap worker threads; results are independent of this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the LLM mode (fixture | live | cache-first).
    #[arg(long, global = true)]
    llm_mode: Option<LlmMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: ingest, features, knowledge, score, select, train,
    /// evaluate; writes all artifacts and the report.
    Run,
    /// Produce the validated knowledge prior and semantic feature spec.
    Knowledge,
    /// Run the pipeline through exemplar selection and export the set.
    Select,
    /// Strategy-comparison grid only.
    Eval,
    /// Component ablation only.
    Ablate,
    /// Per-sample inference timing.
    Bench,
    /// Acceptance suite; exits nonzero on any failed criterion.
    Check,
}

fn load_config(args: &Args) -> Result<RunConfig, cli::StageError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(strategy) = args.strategy {
        config.strategy = strategy;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(mode) = args.llm_mode {
        config.llm.mode = mode;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    if let Some(threads) = args.threads {
        // A second invocation in the same process would fail; that is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }

    if let Err(e) = cli::preflight_fixtures() {
        eprintln!("fixture preflight failed: {e}");
        return ExitCode::FAILURE;
    }

    let config = match load_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };

    let result: Result<(), cli::StageError> = match args.command {
        Command::Run => cli::cmd_run(&config, &args.out).map(|(dir, report)| {
            println!("{}", report.render_text());
            println!("artifacts written to {}", dir.display());
        }),
        Command::Knowledge => cli::cmd_knowledge(&config, &args.out).map(|()| {
            println!("knowledge artifacts written to {}", args.out.display());
        }),
        Command::Select => cli::cmd_select(&config, &args.out).map(|path| {
            println!("exemplars written to {}", path.display());
        }),
        Command::Eval => cli::cmd_eval(&config).map(|report| {
            println!("Strategy comparison (macro F1, %):");
            for (classifier, row) in &report.f1 {
                print!("{classifier:<14}");
                for (strategy, f1) in row {
                    print!("  {strategy}={f1:.2}");
                }
                println!();
            }
            for (strategy, mean) in &report.strategy_means {
                println!("mean[{strategy}] = {mean:.2}");
            }
        }),
        Command::Ablate => cli::cmd_ablate(&config).map(|rows| {
            println!("Ablation (mean macro F1, %):");
            for row in rows {
                println!("{:<22}{:>10.2}  ({:+.2})", row.name, row.mean_macro_f1, row.change);
            }
        }),
        Command::Bench => cli::cmd_bench(&config).map(|timing| {
            println!("Inference timing (ms/sample, median):");
            for (classifier, ms) in timing {
                println!("{classifier:<14}{ms:>12.4}");
            }
        }),
        Command::Check => {
            return if cli::cmd_check(&config) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

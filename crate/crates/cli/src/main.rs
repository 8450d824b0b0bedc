mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raso_core::{QuestionId, Selector, Split};

/// Generate-then-select answering for knowledge-based VQA.
#[derive(Debug, Parser)]
#[command(name = "raso", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Declared backend to use (default: the first one).
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true, default_value = "test")]
    pub split: Split,
    /// Shot count for the command's prompts (generation, selection or retrieval).
    #[arg(long, global = true)]
    pub shots: Option<usize>,
    /// Root directory for run outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub template_dir: Option<PathBuf>,
    /// Concurrent questions per stage.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    /// Print prompt counts and estimated wire calls without sending anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Reserved; runs are deterministic given the cache.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub run_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the dataset files.
    Ingest,
    /// Generate answer choices for the split.
    GenChoices,
    /// Generate rationales for the split.
    GenCot,
    /// Pick one answer per question from the run's choices.
    Select {
        #[arg(long, default_value = "prompt_select")]
        selector: Selector,
        /// Run supplying choices and rationales for the in-context examples.
        #[arg(long)]
        shots_from: Option<String>,
    },
    /// Concatenate the choices of several runs into this run.
    Ensemble {
        /// Run ids (under --out) or run directories, in priority order.
        #[arg(required = true, num_args = 2..)]
        runs: Vec<String>,
    },
    /// Top-k coverage of choice runs (default: this run).
    Coverage { runs: Vec<String> },
    /// Accuracy of this run's selections.
    Evaluate,
    /// Inspect or fill response caches.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Show the in-context examples retrieved for one question.
    Retrieve {
        #[arg(long)]
        question: QuestionId,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CacheAction {
    /// Record counts per backend cache.
    Stats,
    /// Run every stage for the split in memory so later commands hit the cache.
    Warm,
    /// Re-derive every key from its request and report mismatches.
    Verify,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) if e.is::<commands::Usage>() => {
            eprintln!("error: {e}\n\nRun `raso --help` for usage.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

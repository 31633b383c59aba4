use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Format, JudgeKind, LevelsArg, PerturbChoice};

/// Audit research reports against a research graph.
#[derive(Debug, Parser)]
#[command(name = "graphaudit", version, about)]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a graph file; exit 0 if valid, 1 on structural errors, 2 if unreadable.
    Validate {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Score reports and write a run directory.
    Evaluate(RunArgs),
    /// Run only the exam and bias audit against reports.
    Exam(RunArgs),
    /// Rank systems from score files.
    Leaderboard(LeaderboardArgs),
    /// Perturb reports and measure metric responsiveness and evaluator spread.
    Meta(MetaArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct JudgeArgs {
    #[arg(long, value_enum)]
    pub judge: Option<JudgeKind>,
    /// Presence threshold for the deterministic judge.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Base URL of a chat-completion endpoint.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Cap on concurrent judge requests.
    #[arg(long)]
    pub max_parallel: Option<usize>,
    /// Environment variable holding the judge credential.
    #[arg(long)]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Report files or directories of `.md` files.
    #[arg(long = "report", visible_alias = "reports", num_args = 1..)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub exam: Option<PathBuf>,
    #[command(flatten)]
    pub judge: JudgeArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Objectivity penalty per point of stance error.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Overall weights for coverage, consistency, utility, objectivity.
    #[arg(long, value_name = "A,B,C,D")]
    pub weights: Option<String>,
    /// Deepest heading level that starts a section.
    #[arg(long)]
    pub section_depth: Option<u8>,
    /// Parent directory for run directories.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "format", value_enum, value_delimiter = ',')]
    pub formats: Vec<Format>,
    /// Reports evaluated concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Fixed run directory name instead of timestamp and input hash.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct MetaArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub perturb: Option<PerturbChoice>,
    /// Nodes edited per perturbation (1 to 3).
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub levels: Option<LevelsArg>,
    /// Extra evaluator TOML files (a `[judge]` table each) for spread analysis.
    #[arg(long = "evaluator")]
    pub evaluators: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LeaderboardArgs {
    /// `scores.json` files, score CSVs, or run directories.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Directory for `leaderboard.md` and `leaderboard.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "A,B,C,D")]
    pub weights: Option<String>,
    /// Printed format.
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: Format,
}

use std::process::ExitCode;

use clap::Parser;
use graphaudit_cli::args::{Cli, Command};
use graphaudit_cli::commands;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Validate { graph } => commands::validate(graph),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Exam(args) => commands::exam(args),
        Command::Leaderboard(args) => commands::leaderboard(args),
        Command::Meta(args) => commands::meta(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}

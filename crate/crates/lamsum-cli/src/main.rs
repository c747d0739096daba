//! `lamsum`: summarize large post collections by extracting exactly k
//! verbatim units, using chunked multi-level reduction with LLM voters.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 backend (LLM)
//! failure, 3 file I/O failure.

mod commands;
mod settings;

use clap::{Parser, Subcommand};

use commands::{AblateArgs, EvaluateArgs, SummarizeArgs};
use lamsum::ErrorCategory;

#[derive(Parser)]
#[command(name = "lamsum", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a corpus to exactly k of its units
    Summarize(SummarizeArgs),
    /// Score an existing summary against reference summaries
    Evaluate(EvaluateArgs),
    /// Sweep configurations and tabulate results as CSV
    Ablate(AblateArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    let result = match cli.command {
        Command::Summarize(args) => commands::run_summarize(args),
        Command::Evaluate(args) => commands::run_evaluate(args),
        Command::Ablate(args) => commands::run_ablate(args),
    };

    if let Err(err) = result {
        eprintln!("error: {err}");
        let code = match err.category() {
            ErrorCategory::Config => 1,
            ErrorCategory::Backend => 2,
            ErrorCategory::Io => 3,
        };
        std::process::exit(code);
    }
}

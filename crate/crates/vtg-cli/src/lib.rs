//! `vtg` — command-line front end for the grounding toolkit: synthetic data
//! generation, timestamp tokenization, formatting, toy training, evaluation,
//! metric computation, and compressor benchmarking. One binary, subcommand
//! style; every command is deterministic given `--seed`, writes a JSON
//! report into the output directory, and prints a human summary to stdout.

pub mod commands;
pub mod config;
pub mod report;

use clap::error::ErrorKind;
use clap::Parser;

pub use config::RunConfig;
pub use report::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "vtg",
    version,
    about = "Timestamp-aware video grounding toolkit",
    propagate_version = true
)]
pub struct Cli {
    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,

    /// Random seed. Wins over the config file and the VTG_SEED variable.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for JSON reports and generated files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<std::path::PathBuf>,

    #[command(subcommand)]
    pub command: commands::Command,
}

/// Parses argv and runs the chosen subcommand. Returns the process exit
/// code; parse failures print clap's message and count as validation
/// failures (exit 1), while `--help`/`--version` exit 0.
pub fn run_from_args() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help to stdout and errors to stderr by itself
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.structured());
            e.exit_code()
        }
    }
}

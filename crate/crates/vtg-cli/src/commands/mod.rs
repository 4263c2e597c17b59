//! The eight subcommands. Each gets a [`Ctx`] (resolved seed, output
//! directory, loaded config), writes one JSON report into the output
//! directory, and prints a short human summary to stdout.

pub mod compress_bench;
pub mod datagen;
pub mod derive_mr;
pub mod eval;
pub mod format;
pub mod metrics;
pub mod tokenize;
pub mod train_toy;

use std::path::PathBuf;

use clap::Subcommand;

use crate::config::{resolve_out_dir, resolve_seed, RunConfig};
use crate::report::CliError;
use crate::Cli;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the time-token rendering of one timestamp.
    Tokenize(tokenize::TokenizeArgs),
    /// Generate a synthetic grounding dataset as JSONL.
    Datagen(datagen::DatagenArgs),
    /// Derive moment-retrieval samples from dense-captioning annotations.
    DeriveMr(derive_mr::DeriveMrArgs),
    /// Render annotations into prompt/answer training text.
    Format(format::FormatArgs),
    /// Train the small grounding model on a synthetic dataset.
    TrainToy(train_toy::TrainToyArgs),
    /// Run a trained checkpoint over a dataset and score its predictions.
    Eval(eval::EvalArgs),
    /// Score a prediction file against a ground-truth file.
    Metrics(metrics::MetricsArgs),
    /// Benchmark the four token compressors and check their output bounds.
    CompressBench(compress_bench::CompressBenchArgs),
}

/// Everything resolved before a subcommand runs.
pub struct Ctx {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

/// Derives an independent stream seed by mixing a per-purpose tag into the
/// base seed; keeps sibling RNGs (data vs. training vs. per-sample
/// evaluation) from replaying each other's streams.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load_opt(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, config.seed)?;
    let out_dir = resolve_out_dir(cli.out_dir, config.out_dir.clone());
    let ctx = Ctx { seed, out_dir, config };
    match cli.command {
        Command::Tokenize(args) => tokenize::run(&ctx, args),
        Command::Datagen(args) => datagen::run(&ctx, args),
        Command::DeriveMr(args) => derive_mr::run(&ctx, args),
        Command::Format(args) => format::run(&ctx, args),
        Command::TrainToy(args) => train_toy::run(&ctx, args),
        Command::Eval(args) => eval::run(&ctx, args),
        Command::Metrics(args) => metrics::run(&ctx, args),
        Command::CompressBench(args) => compress_bench::run(&ctx, args),
    }
}

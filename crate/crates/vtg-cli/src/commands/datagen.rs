//! `vtg datagen` — writes a synthetic grounding dataset as JSONL, one
//! sample (annotation + feature track) per line.

use clap::Args;
use serde::Serialize;

use vtg_core::vtg_data::{save_jsonl, synth_generate};

use crate::report::{write_report, CliError};

use super::Ctx;

#[derive(Debug, Args)]
pub struct DatagenArgs {
    /// Total sample count, split by the standard task mix. Ignored when any
    /// per-task count is given.
    #[arg(long)]
    pub total: Option<usize>,

    /// Moment-retrieval sample count (explicit counts replace the mix).
    #[arg(long)]
    pub mr: Option<usize>,

    /// Dense-captioning sample count.
    #[arg(long)]
    pub dvc: Option<usize>,

    /// Summarization sample count.
    #[arg(long)]
    pub vs: Option<usize>,

    /// Highlight-detection sample count.
    #[arg(long)]
    pub vhd: Option<usize>,

    /// Shortest video duration in seconds.
    #[arg(long)]
    pub duration_min: Option<f64>,

    /// Longest video duration in seconds.
    #[arg(long)]
    pub duration_max: Option<f64>,

    /// Width of the synthetic feature track.
    #[arg(long)]
    pub feature_dim: Option<usize>,

    /// Most events planted per video (at least one always fits).
    #[arg(long)]
    pub max_events: Option<usize>,

    /// Output file name inside the output directory.
    #[arg(long, default_value = "dataset.jsonl")]
    pub file_name: String,
}

#[derive(Debug, Serialize)]
struct DatagenReport {
    seed: u64,
    mr: usize,
    dvc: usize,
    vs: usize,
    vhd: usize,
    total: usize,
    duration_range: (f64, f64),
    feature_dim: usize,
    max_events: usize,
    file: String,
}

pub fn run(ctx: &Ctx, args: DatagenArgs) -> Result<(), CliError> {
    let mut section = ctx.config.data.clone();
    if args.total.is_some() {
        section.total = args.total;
    }
    if args.mr.is_some() {
        section.mr = args.mr;
    }
    if args.dvc.is_some() {
        section.dvc = args.dvc;
    }
    if args.vs.is_some() {
        section.vs = args.vs;
    }
    if args.vhd.is_some() {
        section.vhd = args.vhd;
    }
    if args.duration_min.is_some() {
        section.duration_min = args.duration_min;
    }
    if args.duration_max.is_some() {
        section.duration_max = args.duration_max;
    }
    if args.feature_dim.is_some() {
        section.feature_dim = args.feature_dim;
    }
    if args.max_events.is_some() {
        section.max_events = args.max_events;
    }
    let spec = section.resolve()?;

    let samples = synth_generate(&spec, ctx.seed)?;
    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", ctx.out_dir.display())))?;
    let data_path = ctx.out_dir.join(&args.file_name);
    save_jsonl(&data_path, &samples)?;

    let report = DatagenReport {
        seed: ctx.seed,
        mr: spec.mr,
        dvc: spec.dvc,
        vs: spec.vs,
        vhd: spec.vhd,
        total: spec.total(),
        duration_range: spec.duration_range,
        feature_dim: spec.feature_dim,
        max_events: spec.max_events,
        file: args.file_name.clone(),
    };
    let path = write_report(&ctx.out_dir, "datagen", &report)?;
    println!(
        "wrote {} samples (mr {}, dvc {}, vs {}, vhd {}) to {}",
        report.total,
        report.mr,
        report.dvc,
        report.vs,
        report.vhd,
        data_path.display()
    );
    println!("report: {}", path.display());
    Ok(())
}

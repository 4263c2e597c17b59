//! `vtg derive-mr` — expands dense-captioning annotations into one
//! moment-retrieval annotation per captioned event. Input lines may be
//! full synthetic samples (annotation + video) or bare annotations; each
//! output line keeps its input line's shape.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use vtg_core::vtg_data::{derive_mr_from_dvc, SynthSample};
use vtg_core::vtg_metrics::TaskKind;
use vtg_core::VtgAnnotation;

use crate::report::{write_report, CliError};

use super::Ctx;

#[derive(Debug, Args)]
pub struct DeriveMrArgs {
    /// JSONL of synthetic samples or bare annotations.
    #[arg(long)]
    pub input: PathBuf,

    /// Output file name inside the output directory.
    #[arg(long, default_value = "derived_mr.jsonl")]
    pub file_name: String,
}

#[derive(Debug, Serialize)]
struct DeriveMrReport {
    input: String,
    file: String,
    lines_read: usize,
    dvc_sources: usize,
    derived: usize,
    skipped_non_dvc: usize,
}

pub fn run(ctx: &Ctx, args: DeriveMrArgs) -> Result<(), CliError> {
    let body = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.input.display())))?;

    let mut out_lines: Vec<String> = Vec::new();
    let mut lines_read = 0usize;
    let mut dvc_sources = 0usize;
    let mut derived = 0usize;
    let mut skipped = 0usize;

    for (no, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        lines_read += 1;
        if let Ok(sample) = serde_json::from_str::<SynthSample>(line) {
            if sample.annotation.task != TaskKind::DenseCaptioning {
                skipped += 1;
                continue;
            }
            dvc_sources += 1;
            for annotation in derive_mr_from_dvc(&sample.annotation)? {
                let out = SynthSample { annotation, video: sample.video.clone() };
                out_lines.push(serde_json::to_string(&out)?);
                derived += 1;
            }
        } else if let Ok(annotation) = serde_json::from_str::<VtgAnnotation>(line) {
            if annotation.task != TaskKind::DenseCaptioning {
                skipped += 1;
                continue;
            }
            dvc_sources += 1;
            for out in derive_mr_from_dvc(&annotation)? {
                out_lines.push(serde_json::to_string(&out)?);
                derived += 1;
            }
        } else {
            return Err(CliError::Validation(format!(
                "{} line {}: neither a synthetic sample nor an annotation",
                args.input.display(),
                no + 1
            )));
        }
    }

    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", ctx.out_dir.display())))?;
    let out_path = ctx.out_dir.join(&args.file_name);
    let mut payload = out_lines.join("\n");
    if !payload.is_empty() {
        payload.push('\n');
    }
    std::fs::write(&out_path, payload)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", out_path.display())))?;

    let report = DeriveMrReport {
        input: args.input.display().to_string(),
        file: args.file_name.clone(),
        lines_read,
        dvc_sources,
        derived,
        skipped_non_dvc: skipped,
    };
    let path = write_report(&ctx.out_dir, "derive_mr", &report)?;
    println!(
        "derived {} retrieval samples from {} captioning sources ({} non-captioning lines skipped)",
        derived, dvc_sources, skipped
    );
    println!("wrote {}", out_path.display());
    println!("report: {}", path.display());
    Ok(())
}

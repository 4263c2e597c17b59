//! `vtg format` — renders annotations into prompt/answer text lines, the
//! exact strings a model trains on. Timestamps render as time-token runs
//! unless `--plain-timestamps` asks for zero-padded digits.

use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vtg_core::vtg_data::{format_sample, SynthSample};
use vtg_core::{TextCodec, VtgAnnotation};

use crate::report::{write_report, CliError};

use super::{sub_seed, Ctx};

#[derive(Debug, Args)]
pub struct FormatArgs {
    /// JSONL of synthetic samples or bare annotations.
    #[arg(long)]
    pub input: PathBuf,

    /// Render timestamps as fixed-width digit strings instead of time tokens.
    #[arg(long)]
    pub plain_timestamps: bool,

    /// Output file name inside the output directory.
    #[arg(long, default_value = "formatted.jsonl")]
    pub file_name: String,
}

#[derive(Debug, Serialize)]
struct FormattedLine {
    video_id: String,
    task: &'static str,
    prompt: String,
    answer: String,
}

#[derive(Debug, Serialize)]
struct FormatReport {
    seed: u64,
    input: String,
    file: String,
    lines: usize,
    use_time_tokens: bool,
}

pub fn run(ctx: &Ctx, args: FormatArgs) -> Result<(), CliError> {
    let body = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.input.display())))?;
    let use_time_tokens = !args.plain_timestamps;
    let vocab = TextCodec::standard().time_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, 0xF0));

    let mut out_lines: Vec<String> = Vec::new();
    for (no, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let annotation = if let Ok(sample) = serde_json::from_str::<SynthSample>(line) {
            sample.annotation
        } else if let Ok(annotation) = serde_json::from_str::<VtgAnnotation>(line) {
            annotation
        } else {
            return Err(CliError::Validation(format!(
                "{} line {}: neither a synthetic sample nor an annotation",
                args.input.display(),
                no + 1
            )));
        };
        let formatted = format_sample(&annotation, use_time_tokens, &vocab, &mut rng)?;
        out_lines.push(serde_json::to_string(&FormattedLine {
            video_id: annotation.video_id.clone(),
            task: annotation.task.name(),
            prompt: formatted.prompt,
            answer: formatted.answer,
        })?);
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

    let report = FormatReport {
        seed: ctx.seed,
        input: args.input.display().to_string(),
        file: args.file_name.clone(),
        lines: out_lines.len(),
        use_time_tokens,
    };
    let path = write_report(&ctx.out_dir, "format", &report)?;
    println!(
        "formatted {} lines ({}) to {}",
        report.lines,
        if use_time_tokens { "time tokens" } else { "plain digits" },
        out_path.display()
    );
    println!("report: {}", path.display());
    Ok(())
}

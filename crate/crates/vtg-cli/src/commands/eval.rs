//! `vtg eval` — runs a trained checkpoint over a dataset: renders each
//! sample's prompt, generates an answer, parses it back into timestamps,
//! and scores the result with the task's metric.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vtg_core::grounding_model::GroundingModel;
use vtg_core::vtg_data::{format_sample, load_jsonl, SynthSample};
use vtg_core::vtg_metrics::{
    dvc_f1, iou, parse_prediction, HighlightFrame, TaskKind, SALIENCY_POSITIVE,
};

use crate::report::{write_report, CliError};

use super::{sub_seed, Ctx};

/// A top-scoring predicted highlight counts as a hit when a saliency-
/// positive ground-truth frame lies within this many seconds of it.
const HIGHLIGHT_HIT_WINDOW: f64 = 5.0;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained model checkpoint (JSON).
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// JSONL of synthetic samples to evaluate on.
    #[arg(long)]
    pub data: PathBuf,

    /// Restrict to one task: mr, dvc, vs, or vhd.
    #[arg(long)]
    pub task: Option<String>,

    /// Sampling temperature; values near zero decode greedily.
    #[arg(long)]
    pub temperature: Option<f64>,

    /// Generation budget per sample.
    #[arg(long)]
    pub max_new: Option<usize>,

    /// Per-sample predictions file name inside the output directory.
    #[arg(long, default_value = "predictions.jsonl")]
    pub predictions_name: String,
}

#[derive(Debug, Serialize)]
struct PredictionRecord {
    index: usize,
    video_id: String,
    task: &'static str,
    prompt: String,
    answer: String,
    prediction: String,
    clean: bool,
}

#[derive(Debug, Default, Serialize)]
struct TaskEval {
    count: usize,
    parse_rate: Option<f64>,
    r1_at_iou_0_5: Option<f64>,
    r1_at_iou_0_7: Option<f64>,
    mean_dvc_f1: Option<f64>,
    hit_rate: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    seed: u64,
    checkpoint: String,
    data: String,
    task_filter: Option<String>,
    temperature: f64,
    max_new_tokens: usize,
    samples: usize,
    parsed_clean: usize,
    parse_rate: f64,
    per_task: BTreeMap<&'static str, TaskEval>,
    predictions: String,
}

fn parse_task(name: &str) -> Result<TaskKind, CliError> {
    TaskKind::ALL
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| CliError::Validation(format!("unknown task {name:?}; use mr, dvc, vs, or vhd")))
}

/// The highest-scoring predicted highlight, earliest on ties.
fn top_highlight(highlights: &[HighlightFrame]) -> Option<&HighlightFrame> {
    highlights.iter().reduce(|best, h| if h.score > best.score { h } else { best })
}

/// Accumulators for one task's scores.
#[derive(Default)]
struct TaskAcc {
    count: usize,
    clean: usize,
    r1_05: usize,
    r1_07: usize,
    f1_sum: f64,
    hits: usize,
}

pub fn run(ctx: &Ctx, args: EvalArgs) -> Result<(), CliError> {
    let temperature = args.temperature.or(ctx.config.eval.temperature).unwrap_or(0.1);
    let max_new = args.max_new.or(ctx.config.eval.max_new_tokens).unwrap_or(40);
    let task_filter = args.task.as_deref().map(parse_task).transpose()?;

    let model = GroundingModel::load(&args.checkpoint)?;
    let vocab = model.time_vocab();
    let all_samples: Vec<SynthSample> = load_jsonl(&args.data)?;
    let samples: Vec<&SynthSample> = all_samples
        .iter()
        .filter(|s| task_filter.is_none_or(|t| s.annotation.task == t))
        .collect();
    if samples.is_empty() {
        return Err(CliError::Validation("no samples to evaluate".into()));
    }

    let mut records = Vec::with_capacity(samples.len());
    let mut accs: BTreeMap<&'static str, TaskAcc> = BTreeMap::new();

    for (index, sample) in samples.iter().enumerate() {
        sample.annotation.validate()?;
        // Each sample gets its own stream so scores cannot depend on
        // evaluation order.
        let mut rng = ChaCha8Rng::seed_from_u64(
            sub_seed(ctx.seed, 4).wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let formatted =
            format_sample(&sample.annotation, model.cfg.use_time_tokens, &vocab, &mut rng)?;
        let prediction =
            model.predict(&sample.video, &formatted.prompt, temperature, max_new, &mut rng)?;
        let task = sample.annotation.task;
        let outcome = parse_prediction(&prediction, task);
        let clean = outcome.is_clean();

        let acc = accs.entry(task.name()).or_default();
        acc.count += 1;
        acc.clean += clean as usize;
        match task {
            TaskKind::MomentRetrieval => {
                let gt = &sample.annotation.events[0];
                if let Some(pred) = outcome.segments.first() {
                    let overlap = iou(pred, gt);
                    acc.r1_05 += (overlap >= 0.5) as usize;
                    acc.r1_07 += (overlap >= 0.7) as usize;
                }
            }
            TaskKind::DenseCaptioning => {
                acc.f1_sum += dvc_f1(&outcome.segments, &sample.annotation.events);
            }
            TaskKind::Summarization | TaskKind::HighlightDetection => {
                if let Some(top) = top_highlight(&outcome.highlights) {
                    let hit = sample.annotation.highlights.iter().any(|g| {
                        g.score >= SALIENCY_POSITIVE
                            && (g.t - top.t).abs() <= HIGHLIGHT_HIT_WINDOW
                    });
                    acc.hits += hit as usize;
                }
            }
        }

        records.push(PredictionRecord {
            index,
            video_id: sample.annotation.video_id.clone(),
            task: task.name(),
            prompt: formatted.prompt,
            answer: formatted.answer,
            prediction,
            clean,
        });
    }

    let mut per_task: BTreeMap<&'static str, TaskEval> = TaskKind::ALL
        .into_iter()
        .map(|t| (t.name(), TaskEval::default()))
        .collect();
    for (name, acc) in &accs {
        let n = acc.count as f64;
        let task = parse_task(name).expect("accumulator keys are task names");
        per_task.insert(
            name,
            TaskEval {
                count: acc.count,
                parse_rate: Some(acc.clean as f64 / n),
                r1_at_iou_0_5: (task == TaskKind::MomentRetrieval)
                    .then(|| acc.r1_05 as f64 / n),
                r1_at_iou_0_7: (task == TaskKind::MomentRetrieval)
                    .then(|| acc.r1_07 as f64 / n),
                mean_dvc_f1: (task == TaskKind::DenseCaptioning).then(|| acc.f1_sum / n),
                hit_rate: (!task.uses_span_lines()).then(|| acc.hits as f64 / n),
            },
        );
    }

    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", ctx.out_dir.display())))?;
    let predictions_path = ctx.out_dir.join(&args.predictions_name);
    vtg_core::vtg_data::save_jsonl(&predictions_path, &records)?;

    let parsed_clean = records.iter().filter(|r| r.clean).count();
    let report = EvalReport {
        seed: ctx.seed,
        checkpoint: args.checkpoint.display().to_string(),
        data: args.data.display().to_string(),
        task_filter: task_filter.map(|t| t.name().to_string()),
        temperature,
        max_new_tokens: max_new,
        samples: records.len(),
        parsed_clean,
        parse_rate: parsed_clean as f64 / records.len() as f64,
        per_task,
        predictions: args.predictions_name.clone(),
    };
    let path = write_report(&ctx.out_dir, "eval", &report)?;

    println!(
        "evaluated {} samples: {:.1}% parsed clean",
        report.samples,
        100.0 * report.parse_rate
    );
    for (name, te) in &report.per_task {
        if te.count == 0 {
            continue;
        }
        let mut parts = vec![format!("{} n={}", name, te.count)];
        if let Some(v) = te.r1_at_iou_0_5 {
            parts.push(format!("R@1(0.5)={v:.3}"));
        }
        if let Some(v) = te.r1_at_iou_0_7 {
            parts.push(format!("R@1(0.7)={v:.3}"));
        }
        if let Some(v) = te.mean_dvc_f1 {
            parts.push(format!("F1={v:.3}"));
        }
        if let Some(v) = te.hit_rate {
            parts.push(format!("hit={v:.3}"));
        }
        println!("  {}", parts.join("  "));
    }
    println!("report: {}", path.display());
    Ok(())
}

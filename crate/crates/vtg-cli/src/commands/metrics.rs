//! `vtg metrics` — scores a prediction file against a ground-truth file,
//! matched by video id. Both files are annotation JSONL; predictions a
//! model never produced count as misses.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use vtg_core::vtg_data::{load_annotations, load_annotations_unchecked};
use vtg_core::vtg_metrics::{
    dvc_f1, highlight_map_and_hit, moment_map, recall_at_1, HighlightQuery, Segment, TaskKind,
    MOMENT_MAP_THRESHOLDS, RECALL_THRESHOLDS,
};
use vtg_core::VtgAnnotation;

use crate::report::{write_report, CliError};

use super::Ctx;

/// Predicted and ground-truth highlight timestamps are considered the same
/// clip when they differ by less than this.
const CLIP_MATCH_EPS: f64 = 1e-6;

/// Score assumed for grid clips the prediction file never mentions: the
/// bottom of the significance scale.
const UNSCORED_CLIP: f64 = 1.0;

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Task to score: mr, dvc, vs, or vhd.
    #[arg(long)]
    pub task: String,

    /// Predictions: annotation JSONL keyed by video id.
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground truth: annotation JSONL keyed by video id.
    #[arg(long)]
    pub gt: PathBuf,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    task: String,
    pred: String,
    gt: String,
    gt_videos: usize,
    matched_videos: usize,
    missing_predictions: usize,
    r1_at_iou_0_5: Option<f64>,
    r1_at_iou_0_7: Option<f64>,
    moment_map_at_0_5: Option<f64>,
    moment_map_at_0_75: Option<f64>,
    mean_dvc_f1: Option<f64>,
    highlight_map: Option<f64>,
    highlight_hit_at_1: Option<f64>,
    evaluated_queries: Option<usize>,
    skipped_queries: Option<usize>,
}

fn parse_task(name: &str) -> Result<TaskKind, CliError> {
    TaskKind::ALL
        .into_iter()
        .find(|t| t.name() == name)
        .ok_or_else(|| CliError::Validation(format!("unknown task {name:?}; use mr, dvc, vs, or vhd")))
}

pub fn run(ctx: &Ctx, args: MetricsArgs) -> Result<(), CliError> {
    let task = parse_task(&args.task)?;
    let gts: Vec<VtgAnnotation> = load_annotations(&args.gt)?
        .into_iter()
        .filter(|a| a.task == task)
        .collect();
    if gts.is_empty() {
        return Err(CliError::Validation(format!(
            "{} has no {} annotations",
            args.gt.display(),
            task.name()
        )));
    }
    let preds: Vec<VtgAnnotation> = load_annotations_unchecked(&args.pred)?;
    let by_id: BTreeMap<&str, &VtgAnnotation> = preds
        .iter()
        .filter(|p| p.task == task)
        .map(|p| (p.video_id.as_str(), p))
        .collect();

    let matched = gts.iter().filter(|g| by_id.contains_key(g.video_id.as_str())).count();
    let missing = gts.len() - matched;

    let mut report = MetricsReport {
        task: task.name().to_string(),
        pred: args.pred.display().to_string(),
        gt: args.gt.display().to_string(),
        gt_videos: gts.len(),
        matched_videos: matched,
        missing_predictions: missing,
        r1_at_iou_0_5: None,
        r1_at_iou_0_7: None,
        moment_map_at_0_5: None,
        moment_map_at_0_75: None,
        mean_dvc_f1: None,
        highlight_map: None,
        highlight_hit_at_1: None,
        evaluated_queries: None,
        skipped_queries: None,
    };

    match task {
        TaskKind::MomentRetrieval | TaskKind::DenseCaptioning => {
            let pred_lists: Vec<Vec<Segment>> = gts
                .iter()
                .map(|g| {
                    by_id
                        .get(g.video_id.as_str())
                        .map(|p| p.events.clone())
                        .unwrap_or_default()
                })
                .collect();
            let gt_lists: Vec<Vec<Segment>> =
                gts.iter().map(|g| g.events.clone()).collect();
            let maps = moment_map(&pred_lists, &gt_lists, &MOMENT_MAP_THRESHOLDS)?;
            report.moment_map_at_0_5 = Some(maps[0]);
            report.moment_map_at_0_75 = Some(maps[1]);

            if task == TaskKind::MomentRetrieval {
                // Misses stay in the denominator as zero-length segments.
                let miss = Segment::new(0.0, 0.0).expect("degenerate segment is valid");
                let top_preds: Vec<Segment> = pred_lists
                    .iter()
                    .map(|events| events.first().cloned().unwrap_or_else(|| miss.clone()))
                    .collect();
                let top_gts: Vec<Segment> =
                    gt_lists.iter().map(|events| events[0].clone()).collect();
                let recalls = recall_at_1(&top_preds, &top_gts, &RECALL_THRESHOLDS)?;
                report.r1_at_iou_0_5 = Some(recalls[0]);
                report.r1_at_iou_0_7 = Some(recalls[1]);
            } else {
                let mean = pred_lists
                    .iter()
                    .zip(&gt_lists)
                    .map(|(p, g)| dvc_f1(p, g))
                    .sum::<f64>()
                    / gts.len() as f64;
                report.mean_dvc_f1 = Some(mean);
            }
        }
        TaskKind::Summarization | TaskKind::HighlightDetection => {
            let queries: Vec<HighlightQuery> = gts
                .iter()
                .map(|g| {
                    let pred_highlights = by_id
                        .get(g.video_id.as_str())
                        .map(|p| p.highlights.as_slice())
                        .unwrap_or(&[]);
                    let pred_scores = g
                        .highlights
                        .iter()
                        .map(|clip| {
                            pred_highlights
                                .iter()
                                .find(|p| (p.t - clip.t).abs() < CLIP_MATCH_EPS)
                                .map(|p| p.score)
                                .unwrap_or(UNSCORED_CLIP)
                        })
                        .collect();
                    let gt_saliency = g.highlights.iter().map(|h| h.score).collect();
                    HighlightQuery { pred_scores, gt_saliency }
                })
                .collect();
            let hl = highlight_map_and_hit(&queries)?;
            report.highlight_map = Some(hl.map);
            report.highlight_hit_at_1 = Some(hl.hit_at_1);
            report.evaluated_queries = Some(hl.evaluated_queries);
            report.skipped_queries = Some(hl.skipped_queries);
        }
    }

    let path = write_report(&ctx.out_dir, "metrics", &report)?;
    println!(
        "{}: {} ground-truth videos, {} matched, {} missing",
        task.name(),
        report.gt_videos,
        report.matched_videos,
        report.missing_predictions
    );
    if let (Some(r5), Some(r7)) = (report.r1_at_iou_0_5, report.r1_at_iou_0_7) {
        println!("  R@1(IoU 0.5) = {r5:.4}   R@1(IoU 0.7) = {r7:.4}");
    }
    if let (Some(m5), Some(m75)) = (report.moment_map_at_0_5, report.moment_map_at_0_75) {
        println!("  mAP(0.5) = {m5:.4}   mAP(0.75) = {m75:.4}");
    }
    if let Some(f1) = report.mean_dvc_f1 {
        println!("  mean F1 = {f1:.4}");
    }
    if let (Some(map), Some(hit)) = (report.highlight_map, report.highlight_hit_at_1) {
        println!("  mAP = {map:.4}   HIT@1 = {hit:.4}");
    }
    println!("report: {}", path.display());
    Ok(())
}

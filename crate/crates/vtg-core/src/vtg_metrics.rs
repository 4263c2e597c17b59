//! Prediction parsing and timestamp-accuracy metrics for temporal grounding:
//! temporal IoU, recall@1 over IoU thresholds, dense-captioning F1 with
//! one-to-one segment matching, highlight mAP/HIT@1 over saliency-positive
//! clips, and detection-style moment mAP.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IoU thresholds for the dense-captioning F1.
pub const DVC_F1_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
/// IoU thresholds reported for recall@1.
pub const RECALL_THRESHOLDS: [f64; 2] = [0.5, 0.7];
/// IoU thresholds for detection-style moment mAP.
pub const MOMENT_MAP_THRESHOLDS: [f64; 2] = [0.5, 0.75];
/// Clips with ground-truth saliency at or above this are highlight positives.
pub const SALIENCY_POSITIVE: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("segment has start {start} after end {end}")]
    InvertedSegment { start: f64, end: f64 },
    #[error("segment timestamps must be finite and non-negative")]
    BadTimestamp,
    #[error("{preds} predictions for {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("query {query}: {pred} predicted clip scores over {gt} ground-truth clips")]
    GridMismatch { query: usize, pred: usize, gt: usize },
    #[error("no query has a positive clip; highlight metrics are undefined")]
    NoPositiveClips,
}

/// The four grounding tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "mr")]
    MomentRetrieval,
    #[serde(rename = "dvc")]
    DenseCaptioning,
    #[serde(rename = "vs")]
    Summarization,
    #[serde(rename = "vhd")]
    HighlightDetection,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::MomentRetrieval,
        TaskKind::DenseCaptioning,
        TaskKind::Summarization,
        TaskKind::HighlightDetection,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::MomentRetrieval => "mr",
            TaskKind::DenseCaptioning => "dvc",
            TaskKind::Summarization => "vs",
            TaskKind::HighlightDetection => "vhd",
        }
    }

    /// Whether answers for this task are span lines ("Start - End seconds,
    /// …") rather than highlight lines ("At T second, significance score…").
    pub fn uses_span_lines(&self) -> bool {
        matches!(self, TaskKind::MomentRetrieval | TaskKind::DenseCaptioning)
    }
}

/// A time interval with optional caption and score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Result<Self, MetricsError> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 {
            return Err(MetricsError::BadTimestamp);
        }
        if start > end {
            return Err(MetricsError::InvertedSegment { start, end });
        }
        Ok(Segment { start, end, caption: None, score: None })
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// One scored instant: a timestamp with a significance score in [1, 5].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightFrame {
    pub t: f64,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl HighlightFrame {
    pub fn new(t: f64, score: f64) -> Result<Self, MetricsError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(MetricsError::BadTimestamp);
        }
        if !(1.0..=5.0).contains(&score) {
            return Err(MetricsError::BadTimestamp);
        }
        Ok(HighlightFrame { t, score, caption: None })
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }
}

/// A line the parser could not use, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDiagnostic {
    pub line_no: usize,
    pub content: String,
    pub reason: String,
}

/// Best-effort parse result: whatever was recoverable plus diagnostics for
/// the rest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub segments: Vec<Segment>,
    pub highlights: Vec<HighlightFrame>,
    pub diagnostics: Vec<LineDiagnostic>,
}

impl ParseOutcome {
    /// True when at least one line parsed and none failed.
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty() && (!self.segments.is_empty() || !self.highlights.is_empty())
    }
}

fn span_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(\d+(?:\.\d+)?)\s*-\s*(\d+(?:\.\d+)?)\s*seconds?\s*[,.]?\s*(.*?)\s*$")
            .expect("static pattern")
    })
}

fn highlight_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^\s*At\s+(\d+(?:\.\d+)?)\s*seconds?\s*,\s*significance\s+score\s*:?\s*(\d+(?:\.\d+)?)\s*[,.]?\s*(.*?)\s*$",
        )
        .expect("static pattern")
    })
}

fn time_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<t_(\d|dot)>").expect("static pattern"))
}

/// Rewrites time-token surface runs into plain digit text so one numeric
/// grammar covers both rendering modes.
pub fn expand_time_tokens(text: &str) -> String {
    time_token_re()
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let inner = caps.get(1).expect("group present").as_str();
            if inner == "dot" {
                ".".to_string()
            } else {
                inner.to_string()
            }
        })
        .into_owned()
}

/// Parses model output line by line. Moment-retrieval and dense-captioning
/// tasks expect span lines, summarization and highlight detection expect
/// highlight lines. Lines that fail become diagnostics, never errors; blank
/// lines are skipped.
pub fn parse_prediction(text: &str, task: TaskKind) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let line = expand_time_tokens(raw_line);
        let fail = |reason: &str, out: &mut ParseOutcome| {
            out.diagnostics.push(LineDiagnostic {
                line_no,
                content: raw_line.to_string(),
                reason: reason.to_string(),
            });
        };
        if task.uses_span_lines() {
            match span_re().captures(&line) {
                Some(caps) => {
                    let start: f64 = caps[1].parse().expect("regex admits only numbers");
                    let end: f64 = caps[2].parse().expect("regex admits only numbers");
                    match Segment::new(start, end) {
                        Ok(mut seg) => {
                            let caption = caps[3].trim();
                            if !caption.is_empty() {
                                seg = seg.with_caption(caption);
                            }
                            out.segments.push(seg);
                        }
                        Err(e) => fail(&e.to_string(), &mut out),
                    }
                }
                None => fail("not a 'Start - End seconds, description' line", &mut out),
            }
        } else {
            match highlight_re().captures(&line) {
                Some(caps) => {
                    let t: f64 = caps[1].parse().expect("regex admits only numbers");
                    let score: f64 = caps[2].parse().expect("regex admits only numbers");
                    match HighlightFrame::new(t, score) {
                        Ok(mut frame) => {
                            let caption = caps[3].trim();
                            if !caption.is_empty() {
                                frame = frame.with_caption(caption);
                            }
                            out.highlights.push(frame);
                        }
                        Err(_) => fail("significance score outside [1, 5]", &mut out),
                    }
                }
                None => {
                    fail("not an 'At T second, significance score: S' line", &mut out)
                }
            }
        }
    }
    out
}

/// Temporal intersection-over-union. Two zero-length segments at the same
/// point count as identical (IoU 1); a zero-length segment against anything
/// else scores 0.
pub fn iou(a: &Segment, b: &Segment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        return if a.start == b.start && a.end == b.end { 1.0 } else { 0.0 };
    }
    inter / union
}

/// Fraction of queries whose single prediction reaches each IoU threshold.
/// `preds[i]` answers the query with ground truth `gts[i]`.
pub fn recall_at_1(
    preds: &[Segment],
    gts: &[Segment],
    thresholds: &[f64],
) -> Result<Vec<f64>, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    let ious: Vec<f64> = preds.iter().zip(gts).map(|(p, g)| iou(p, g)).collect();
    Ok(thresholds
        .iter()
        .map(|&thr| ious.iter().filter(|&&v| v >= thr).count() as f64 / preds.len() as f64)
        .collect())
}

/// Size of the largest one-to-one matching in a bipartite graph given as
/// adjacency lists from the left side, via augmenting paths.
fn max_one_to_one(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(
        left: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &right in &adj[left] {
            if !seen[right] {
                seen[right] = true;
                let free = match owner[right] {
                    None => true,
                    Some(prev) => augment(prev, adj, seen, owner),
                };
                if free {
                    owner[right] = Some(left);
                    return true;
                }
            }
        }
        false
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_right];
    let mut matched = 0;
    for left in 0..adj.len() {
        let mut seen = vec![false; n_right];
        if augment(left, adj, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched
}

/// F1 of a one-to-one segment matching at one IoU threshold. The matching
/// maximizes the number of matched pairs, so precision and recall share the
/// same numerator.
pub fn dvc_f1_at(preds: &[Segment], gts: &[Segment], threshold: f64) -> f64 {
    if preds.is_empty() && gts.is_empty() {
        return 1.0;
    }
    if preds.is_empty() || gts.is_empty() {
        return 0.0;
    }
    let adj: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| {
            let mut candidates: Vec<(usize, f64)> = gts
                .iter()
                .enumerate()
                .map(|(j, g)| (j, iou(p, g)))
                .filter(|&(_, v)| v >= threshold)
                .collect();
            // visiting strong overlaps first keeps augmentation short; the
            // matched count is the same in any order
            candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite iou"));
            candidates.into_iter().map(|(j, _)| j).collect()
        })
        .collect();
    let matched = max_one_to_one(&adj, gts.len()) as f64;
    let precision = matched / preds.len() as f64;
    let recall = matched / gts.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Dense-captioning F1: the mean of [`dvc_f1_at`] over the standard
/// threshold ladder {0.3, 0.5, 0.7, 0.9}.
pub fn dvc_f1(preds: &[Segment], gts: &[Segment]) -> f64 {
    let sum: f64 = DVC_F1_THRESHOLDS.iter().map(|&thr| dvc_f1_at(preds, gts, thr)).sum();
    sum / DVC_F1_THRESHOLDS.len() as f64
}

/// One highlight query: predicted scores and ground-truth saliency over the
/// same clip grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightQuery {
    pub pred_scores: Vec<f64>,
    pub gt_saliency: Vec<f64>,
}

/// Aggregate highlight metrics over the queries that have positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightReport {
    pub map: f64,
    pub hit_at_1: f64,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
}

/// Clip indices ranked by score descending, ties by lower clip index.
fn rank_clips(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
    });
    order
}

/// Average precision of one ranked clip list: mean of precision-at-rank over
/// the ranks where a positive appears.
fn average_precision(order: &[usize], positive: &[bool]) -> Option<f64> {
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &clip) in order.iter().enumerate() {
        if positive[clip] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Highlight mAP and HIT@1. Positives are clips whose ground-truth saliency
/// reaches [`SALIENCY_POSITIVE`]; queries without any positive are skipped.
pub fn highlight_map_and_hit(queries: &[HighlightQuery]) -> Result<HighlightReport, MetricsError> {
    if queries.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    let mut ap_sum = 0.0;
    let mut hit_sum = 0.0;
    let mut evaluated = 0usize;
    for (qi, q) in queries.iter().enumerate() {
        if q.pred_scores.len() != q.gt_saliency.len() {
            return Err(MetricsError::GridMismatch {
                query: qi,
                pred: q.pred_scores.len(),
                gt: q.gt_saliency.len(),
            });
        }
        if q.pred_scores.is_empty() {
            continue;
        }
        let positive: Vec<bool> = q.gt_saliency.iter().map(|&s| s >= SALIENCY_POSITIVE).collect();
        let order = rank_clips(&q.pred_scores);
        match average_precision(&order, &positive) {
            Some(ap) => {
                ap_sum += ap;
                hit_sum += if positive[order[0]] { 1.0 } else { 0.0 };
                evaluated += 1;
            }
            None => continue,
        }
    }
    if evaluated == 0 {
        return Err(MetricsError::NoPositiveClips);
    }
    Ok(HighlightReport {
        map: ap_sum / evaluated as f64,
        hit_at_1: hit_sum / evaluated as f64,
        evaluated_queries: evaluated,
        skipped_queries: queries.len() - evaluated,
    })
}

/// Detection-style moment AP for one query at one IoU threshold: rank
/// predictions by score (ties by index), match each greedily to the best
/// unused ground truth at or above the threshold, and average precision at
/// the true-positive ranks over the ground-truth count.
fn moment_ap_at(preds: &[Segment], gts: &[Segment], threshold: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    if preds.is_empty() {
        return Some(0.0);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = preds[a].score.unwrap_or(0.0);
        let sb = preds[b].score.unwrap_or(0.0);
        sb.partial_cmp(&sa).expect("finite scores").then(a.cmp(&b))
    });
    let mut used = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &pi) in order.iter().enumerate() {
        let best = gts
            .iter()
            .enumerate()
            .filter(|&(gi, g)| !used[gi] && iou(&preds[pi], g) >= threshold)
            .max_by(|a, b| {
                iou(&preds[pi], a.1)
                    .partial_cmp(&iou(&preds[pi], b.1))
                    .expect("finite iou")
                    .then(b.0.cmp(&a.0))
            });
        if let Some((gi, _)) = best {
            used[gi] = true;
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / gts.len() as f64)
}

/// Moment mAP per IoU threshold, averaged over queries that have ground
/// truth. This is the detection-style variant; highlight mAP above is the
/// saliency-ranking variant.
pub fn moment_map(
    preds: &[Vec<Segment>],
    gts: &[Vec<Segment>],
    thresholds: &[f64],
) -> Result<Vec<f64>, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &thr in thresholds {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (p, g) in preds.iter().zip(gts) {
            if let Some(ap) = moment_ap_at(p, g, thr) {
                sum += ap;
                n += 1;
            }
        }
        if n == 0 {
            return Err(MetricsError::NoQueries);
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seg(start: f64, end: f64) -> Segment {
        Segment::new(start, end).unwrap()
    }

    #[test]
    fn parse_span_paper_example() {
        let out = parse_prediction(
            "90 - 102 seconds, spreading butter on two slices of white bread",
            TaskKind::DenseCaptioning,
        );
        assert!(out.is_clean());
        assert_eq!(out.segments.len(), 1);
        assert_eq!(out.segments[0].start, 90.0);
        assert_eq!(out.segments[0].end, 102.0);
        assert_eq!(
            out.segments[0].caption.as_deref(),
            Some("spreading butter on two slices of white bread")
        );
    }

    #[test]
    fn parse_highlight_paper_example() {
        let out = parse_prediction(
            "At 82 second, significance score: 5, the detailed demonstration of how to use the round brush",
            TaskKind::HighlightDetection,
        );
        assert!(out.is_clean());
        assert_eq!(out.highlights.len(), 1);
        assert_eq!(out.highlights[0].t, 82.0);
        assert_eq!(out.highlights[0].score, 5.0);
    }

    #[test]
    fn parse_zero_padded_and_time_token_forms() {
        let padded = parse_prediction("0090.0 - 0102.0 seconds, x", TaskKind::MomentRetrieval);
        assert_eq!(padded.segments, vec![seg(90.0, 102.0).with_caption("x")]);

        let tokens = parse_prediction(
            "<t_0><t_0><t_9><t_0><t_dot><t_0> - <t_0><t_1><t_0><t_2><t_dot><t_0> seconds, x",
            TaskKind::MomentRetrieval,
        );
        assert_eq!(tokens.segments, padded.segments);
    }

    #[test]
    fn parse_reports_garbage_lines() {
        let text = "0.0 - 2.0 seconds, a\nnot a span at all\n3.0 - 4.0 seconds, b";
        let out = parse_prediction(text, TaskKind::DenseCaptioning);
        assert_eq!(out.segments.len(), 2);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].line_no, 2);
        assert_eq!(out.diagnostics[0].content, "not a span at all");
    }

    #[test]
    fn parse_rejects_inverted_span_with_diagnostic() {
        let out = parse_prediction("9.0 - 4.0 seconds, backwards", TaskKind::MomentRetrieval);
        assert!(out.segments.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn parse_skips_blank_lines_silently() {
        let out = parse_prediction("\n1.0 - 2.0 seconds, a\n\n", TaskKind::MomentRetrieval);
        assert!(out.is_clean());
        assert_eq!(out.segments.len(), 1);
    }

    #[test]
    fn parse_rejects_out_of_range_significance() {
        let out = parse_prediction(
            "At 5 second, significance score: 9, way too salient",
            TaskKind::HighlightDetection,
        );
        assert!(out.highlights.is_empty());
        assert_eq!(out.diagnostics.len(), 1);
    }

    #[test]
    fn iou_hand_cases() {
        assert_eq!(iou(&seg(0.0, 10.0), &seg(0.0, 10.0)), 1.0);
        assert!((iou(&seg(0.0, 10.0), &seg(5.0, 15.0)) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&seg(0.0, 1.0), &seg(2.0, 3.0)), 0.0);
    }

    #[test]
    fn iou_degenerate_segments() {
        assert_eq!(iou(&seg(5.0, 5.0), &seg(5.0, 5.0)), 1.0);
        assert_eq!(iou(&seg(5.0, 5.0), &seg(6.0, 6.0)), 0.0);
        assert_eq!(iou(&seg(5.0, 5.0), &seg(0.0, 10.0)), 0.0);
    }

    #[test]
    fn recall_perfect_and_disjoint() {
        let gts = vec![seg(0.0, 5.0), seg(10.0, 20.0)];
        let r = recall_at_1(&gts.clone(), &gts, &RECALL_THRESHOLDS).unwrap();
        assert_eq!(r, vec![1.0, 1.0]);
        let far = vec![seg(100.0, 105.0), seg(200.0, 220.0)];
        let r = recall_at_1(&far, &gts, &RECALL_THRESHOLDS).unwrap();
        assert_eq!(r, vec![0.0, 0.0]);
    }

    #[test]
    fn recall_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for _ in 0..100 {
            let s = rng.gen_range(0.0..50.0);
            let e = s + rng.gen_range(0.0..20.0);
            preds.push(seg(s, e));
            let s = rng.gen_range(0.0..50.0);
            let e = s + rng.gen_range(0.0..20.0);
            gts.push(seg(s, e));
        }
        let got = recall_at_1(&preds, &gts, &RECALL_THRESHOLDS).unwrap();
        for (ti, &thr) in RECALL_THRESHOLDS.iter().enumerate() {
            let mut count = 0;
            for i in 0..100 {
                if iou(&preds[i], &gts[i]) >= thr {
                    count += 1;
                }
            }
            assert!((got[ti] - count as f64 / 100.0).abs() < 1e-15);
        }
    }

    #[test]
    fn recall_rejects_misaligned_queries() {
        let a = vec![seg(0.0, 1.0)];
        assert_eq!(
            recall_at_1(&a, &[], &RECALL_THRESHOLDS).unwrap_err(),
            MetricsError::LengthMismatch { preds: 1, gts: 0 }
        );
    }

    #[test]
    fn dvc_f1_identity_and_empties() {
        let gts = vec![seg(0.0, 5.0), seg(8.0, 12.0)];
        assert_eq!(dvc_f1(&gts.clone(), &gts), 1.0);
        assert_eq!(dvc_f1(&[], &gts), 0.0);
        assert_eq!(dvc_f1(&gts, &[]), 0.0);
        assert_eq!(dvc_f1(&[], &[]), 1.0);
    }

    /// Brute-force maximum one-to-one matching by recursion over
    /// pred-to-gt assignments; usable up to ~4x4.
    fn exhaustive_matches(preds: &[Segment], gts: &[Segment], thr: f64) -> usize {
        fn go(i: usize, used: &mut Vec<bool>, preds: &[Segment], gts: &[Segment], thr: f64) -> usize {
            if i == preds.len() {
                return 0;
            }
            // skip pred i
            let mut best = go(i + 1, used, preds, gts, thr);
            for j in 0..gts.len() {
                if !used[j] && iou(&preds[i], &gts[j]) >= thr {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, used, preds, gts, thr));
                    used[j] = false;
                }
            }
            best
        }
        go(0, &mut vec![false; gts.len()], preds, gts, thr)
    }

    fn f1_from_matches(m: usize, n_pred: usize, n_gt: usize) -> f64 {
        if n_pred == 0 && n_gt == 0 {
            return 1.0;
        }
        if n_pred == 0 || n_gt == 0 {
            return 0.0;
        }
        let p = m as f64 / n_pred as f64;
        let r = m as f64 / n_gt as f64;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    #[test]
    fn dvc_f1_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..200 {
            let n_pred = rng.gen_range(0..=4);
            let n_gt = rng.gen_range(0..=4);
            let rand_segs = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Segment> {
                (0..n)
                    .map(|_| {
                        let s = rng.gen_range(0.0..20.0);
                        seg(s, s + rng.gen_range(0.0..15.0))
                    })
                    .collect()
            };
            let preds = rand_segs(&mut rng, n_pred);
            let gts = rand_segs(&mut rng, n_gt);
            let got = dvc_f1(&preds, &gts);
            let want: f64 = DVC_F1_THRESHOLDS
                .iter()
                .map(|&thr| f1_from_matches(exhaustive_matches(&preds, &gts, thr), n_pred, n_gt))
                .sum::<f64>()
                / DVC_F1_THRESHOLDS.len() as f64;
            assert!((got - want).abs() < 1e-9, "got {got}, oracle {want}");
        }
    }

    #[test]
    fn dvc_f1_finds_the_larger_matching_where_greedy_would_not() {
        // best-IoU-first pairing would lock pred A onto gt X and strand
        // pred B; the maximum matching pairs A-Y and B-X
        let preds = vec![seg(0.0, 11.0), seg(0.0, 8.0)];
        let gts = vec![seg(0.0, 10.0), seg(5.0, 18.0)];
        let got = dvc_f1_at(&preds, &gts, 0.3);
        assert!((got - 1.0).abs() < 1e-12, "expected both pairs matched, got {got}");
    }

    #[test]
    fn highlight_perfect_ranking() {
        let q = HighlightQuery {
            pred_scores: vec![0.9, 0.8, 0.1, 0.2],
            gt_saliency: vec![5.0, 4.0, 1.0, 2.0],
        };
        let rep = highlight_map_and_hit(&[q]).unwrap();
        assert_eq!(rep.map, 1.0);
        assert_eq!(rep.hit_at_1, 1.0);
        assert_eq!(rep.evaluated_queries, 1);
    }

    #[test]
    fn highlight_skips_queries_without_positives() {
        let with = HighlightQuery { pred_scores: vec![0.2, 0.9], gt_saliency: vec![1.0, 5.0] };
        let without = HighlightQuery { pred_scores: vec![0.5, 0.4], gt_saliency: vec![1.0, 2.0] };
        let rep = highlight_map_and_hit(&[with, without]).unwrap();
        assert_eq!(rep.evaluated_queries, 1);
        assert_eq!(rep.skipped_queries, 1);
        assert_eq!(rep.map, 1.0);
    }

    #[test]
    fn highlight_errors_when_no_query_has_positives() {
        let q = HighlightQuery { pred_scores: vec![0.5], gt_saliency: vec![1.0] };
        assert_eq!(highlight_map_and_hit(&[q]).unwrap_err(), MetricsError::NoPositiveClips);
    }

    #[test]
    fn highlight_ap_matches_direct_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let n = 8;
            let pred_scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let gt_saliency: Vec<f64> =
                (0..n).map(|_| rng.gen_range(1.0..=5.0_f64).round()).collect();
            if !gt_saliency.iter().any(|&s| s >= SALIENCY_POSITIVE) {
                continue;
            }
            let rep = highlight_map_and_hit(&[HighlightQuery {
                pred_scores: pred_scores.clone(),
                gt_saliency: gt_saliency.clone(),
            }])
            .unwrap();

            // direct oracle: precision at each positive's rank, averaged
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                pred_scores[b].partial_cmp(&pred_scores[a]).unwrap().then(a.cmp(&b))
            });
            let mut hits = 0.0;
            let mut sum = 0.0;
            let mut total = 0.0;
            for (rank, &clip) in order.iter().enumerate() {
                if gt_saliency[clip] >= SALIENCY_POSITIVE {
                    hits += 1.0;
                    sum += hits / (rank + 1) as f64;
                    total += 1.0;
                }
            }
            assert!((rep.map - sum / total).abs() < 1e-9);
        }
    }

    #[test]
    fn highlight_grid_mismatch_is_an_error() {
        let q = HighlightQuery { pred_scores: vec![0.5, 0.6], gt_saliency: vec![5.0] };
        assert_eq!(
            highlight_map_and_hit(&[q]).unwrap_err(),
            MetricsError::GridMismatch { query: 0, pred: 2, gt: 1 }
        );
    }

    #[test]
    fn moment_map_perfect_predictions() {
        let gts = vec![vec![seg(0.0, 4.0), seg(10.0, 16.0)]];
        let preds = vec![vec![
            seg(0.0, 4.0).with_score(0.9),
            seg(10.0, 16.0).with_score(0.8),
        ]];
        let maps = moment_map(&preds, &gts, &MOMENT_MAP_THRESHOLDS).unwrap();
        assert_eq!(maps, vec![1.0, 1.0]);
    }

    #[test]
    fn moment_map_counts_unmatched_gts_against_recall() {
        // one of two gts found: AP = precision(1)=1 at rank 1, over 2 gts
        let gts = vec![vec![seg(0.0, 4.0), seg(10.0, 16.0)]];
        let preds = vec![vec![seg(0.0, 4.0).with_score(0.9)]];
        let maps = moment_map(&preds, &gts, &[0.5]).unwrap();
        assert!((maps[0] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(s1 in 0.0..100.0f64, l1 in 0.0..50.0f64,
                                 s2 in 0.0..100.0f64, l2 in 0.0..50.0f64) {
            let a = seg(s1, s1 + l1);
            let b = seg(s2, s2 + l2);
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if ab == 1.0 {
                prop_assert_eq!(a.start, b.start);
                prop_assert_eq!(a.end, b.end);
            }
        }

        #[test]
        fn recall_monotone_in_threshold(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..30);
            let mk = |rng: &mut ChaCha8Rng| {
                let s = rng.gen_range(0.0..30.0);
                seg(s, s + rng.gen_range(0.0..10.0))
            };
            let preds: Vec<Segment> = (0..n).map(|_| mk(&mut rng)).collect();
            let gts: Vec<Segment> = (0..n).map(|_| mk(&mut rng)).collect();
            let r = recall_at_1(&preds, &gts, &[0.3, 0.5, 0.7, 0.9]).unwrap();
            for w in r.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn dvc_f1_order_invariant(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| {
                let s = rng.gen_range(0.0..20.0);
                seg(s, s + rng.gen_range(0.0..10.0))
            };
            let preds: Vec<Segment> = (0..rng.gen_range(0..6)).map(|_| mk(&mut rng)).collect();
            let gts: Vec<Segment> = (0..rng.gen_range(0..6)).map(|_| mk(&mut rng)).collect();
            let forward = dvc_f1(&preds, &gts);
            prop_assert!((0.0..=1.0).contains(&forward));
            let mut rp = preds.clone();
            rp.reverse();
            let mut rg = gts.clone();
            rg.reverse();
            prop_assert!((forward - dvc_f1(&rp, &rg)).abs() < 1e-12);
        }

        #[test]
        fn highlight_ap_invariant_to_affine_score_rescale(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..12);
            let pred_scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut gt_saliency: Vec<f64> =
                (0..n).map(|_| rng.gen_range(1.0..=5.0_f64).round()).collect();
            gt_saliency[0] = 5.0; // guarantee a positive
            let q1 = HighlightQuery {
                pred_scores: pred_scores.clone(),
                gt_saliency: gt_saliency.clone(),
            };
            let rescaled: Vec<f64> = pred_scores.iter().map(|s| 3.0 * s + 7.0).collect();
            let q2 = HighlightQuery { pred_scores: rescaled, gt_saliency };
            let r1 = highlight_map_and_hit(&[q1]).unwrap();
            let r2 = highlight_map_and_hit(&[q2]).unwrap();
            prop_assert!((r1.map - r2.map).abs() < 1e-12);
            prop_assert_eq!(r1.hit_at_1, r2.hit_at_1);
        }
    }
}

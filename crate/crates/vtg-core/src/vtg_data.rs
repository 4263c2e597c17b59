//! Annotation schema, prompt/answer formatting for the four grounding tasks,
//! dataset derivations (captions-as-queries, saliency normalization), frame
//! sampling, and a seeded synthetic dataset generator whose feature tracks
//! carry event-aligned bumps so the grounding tasks are actually learnable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time_tokenizer::{render_span, render_timestamp, TimeTokenError, TimeVocab};
use crate::vtg_metrics::{HighlightFrame, Segment, TaskKind};

/// Events and durations snap to this grid (seconds) in synthetic data.
pub const TIME_GRID: f64 = 5.0;
/// Planted event lengths, in seconds.
pub const EVENT_LENGTHS: [f64; 3] = [10.0, 15.0, 20.0];
/// Normalized saliency below this floor (pre-rounding) is dropped.
pub const DEFAULT_SALIENCY_FLOOR: f64 = 2.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no scores to normalize")]
    EmptySaliency,
    #[error("expected a {expected} annotation, got {got}")]
    TaskMismatch { expected: &'static str, got: &'static str },
    #[error("{task} annotation has no {payload}")]
    PayloadMissing { task: &'static str, payload: &'static str },
    #[error("timestamp {t}s exceeds video duration {duration}s")]
    TimestampBeyondDuration { t: f64, duration: f64 },
    #[error("duration range [{lo}, {hi}) is empty or negative")]
    BadDurationRange { lo: f64, hi: f64 },
    #[error("duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("frame count must be at least 1")]
    BadFrameCount,
    #[error("timestamp rendering failed: {0}")]
    Render(#[from] TimeTokenError),
    #[error("line {line}: {source}")]
    BadLine { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Train/test split behavior for sampling-sensitive operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test")]
    Test,
}

/// One grounding annotation: a video, a task, and the task's payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtgAnnotation {
    pub video_id: String,
    pub duration: f64,
    pub task: TaskKind,
    #[serde(default)]
    pub query: String,
    #[serde(default)]
    pub events: Vec<Segment>,
    #[serde(default)]
    pub highlights: Vec<HighlightFrame>,
}

impl VtgAnnotation {
    /// Checks timestamp bounds and that the task's payload is present.
    pub fn validate(&self) -> Result<(), DataError> {
        for seg in &self.events {
            if seg.end > self.duration {
                return Err(DataError::TimestampBeyondDuration {
                    t: seg.end,
                    duration: self.duration,
                });
            }
        }
        for h in &self.highlights {
            if h.t > self.duration {
                return Err(DataError::TimestampBeyondDuration { t: h.t, duration: self.duration });
            }
        }
        let missing = match self.task {
            TaskKind::MomentRetrieval | TaskKind::DenseCaptioning => {
                self.events.is_empty().then_some("events")
            }
            TaskKind::Summarization | TaskKind::HighlightDetection => {
                self.highlights.is_empty().then_some("highlights")
            }
        };
        match missing {
            Some(payload) => Err(DataError::PayloadMissing { task: self.task.name(), payload }),
            None => Ok(()),
        }
    }
}

/// A prompt/answer pair ready for tokenization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormattedSample {
    pub prompt: String,
    pub answer: String,
}

pub const MR_TEMPLATES: [&str; 3] = [
    "Locate the moment of: {query}. Reply as 'Start - End seconds, event description'.",
    "When does this happen: {query}? Answer in the form 'Start - End seconds, event description'.",
    "Find the span matching '{query}'. Use the format 'Start - End seconds, event description'.",
];

pub const DVC_TEMPLATES: [&str; 3] = [
    "Locate each event and describe it. Format every line as 'Start - End seconds, event description'.",
    "List the events in this video with their timestamps, one per line, as 'Start - End seconds, event description'.",
    "Output every event as 'Start - End seconds, event description'.",
];

pub const HIGHLIGHT_TEMPLATES: [&str; 3] = [
    "Find the highlight frames and score each 1-5, one line per frame, as 'At T second, significance score: S, description'.",
    "Mark the salient moments. Format each as 'At T second, significance score: S, description'.",
    "Report highlight timestamps with significance scores, formatted 'At T second, significance score: S, description'.",
];

/// Renders an annotation into a prompt (seeded template choice) and an
/// answer in the task's line format, timestamps zero-padded "DDDD.D" or as
/// time-token runs.
pub fn format_sample(
    a: &VtgAnnotation,
    use_time_tokens: bool,
    vocab: &TimeVocab,
    rng: &mut ChaCha8Rng,
) -> Result<FormattedSample, DataError> {
    a.validate()?;
    let pool: &[&str] = match a.task {
        TaskKind::MomentRetrieval => &MR_TEMPLATES,
        TaskKind::DenseCaptioning => &DVC_TEMPLATES,
        TaskKind::Summarization | TaskKind::HighlightDetection => &HIGHLIGHT_TEMPLATES,
    };
    let template = pool[rng.gen_range(0..pool.len())];
    let prompt = template.replace("{query}", &a.query);

    let answer = if a.task.uses_span_lines() {
        let mut lines = Vec::with_capacity(a.events.len());
        for seg in &a.events {
            let span = render_span(seg.start, seg.end, use_time_tokens, vocab)?;
            let caption = seg.caption.as_deref().unwrap_or(&a.query);
            lines.push(format!("{span} seconds, {caption}"));
        }
        lines.join("\n")
    } else {
        let mut lines = Vec::with_capacity(a.highlights.len());
        for h in &a.highlights {
            let ts = render_timestamp(h.t, use_time_tokens, vocab)?;
            let caption = h.caption.as_deref().unwrap_or("");
            lines.push(format!(
                "At {ts} second, significance score: {}, {caption}",
                h.score.round() as i64
            ));
        }
        lines.join("\n")
    };
    Ok(FormattedSample { prompt, answer })
}

/// Turns one dense-captioning annotation into one moment-retrieval
/// annotation per event: the caption becomes the query, the span the answer.
pub fn derive_mr_from_dvc(dvc: &VtgAnnotation) -> Result<Vec<VtgAnnotation>, DataError> {
    if dvc.task != TaskKind::DenseCaptioning {
        return Err(DataError::TaskMismatch { expected: "dvc", got: dvc.task.name() });
    }
    Ok(dvc
        .events
        .iter()
        .enumerate()
        .map(|(i, seg)| VtgAnnotation {
            video_id: format!("{}#mr{}", dvc.video_id, i),
            duration: dvc.duration,
            task: TaskKind::MomentRetrieval,
            query: seg.caption.clone().unwrap_or_default(),
            events: vec![seg.clone()],
            highlights: vec![],
        })
        .collect())
}

/// Min-max normalizes raw scores onto [1, 5] and rounds to the nearest
/// integer. A constant input maps everything to 5 (equally salient reads as
/// maximally salient).
pub fn normalize_saliency(raw: &[f64]) -> Result<Vec<f64>, DataError> {
    Ok(normalize_saliency_raw(raw)?.into_iter().map(f64::round).collect())
}

fn normalize_saliency_raw(raw: &[f64]) -> Result<Vec<f64>, DataError> {
    if raw.is_empty() {
        return Err(DataError::EmptySaliency);
    }
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![5.0; raw.len()]);
    }
    Ok(raw.iter().map(|&x| 1.0 + 4.0 * (x - lo) / (hi - lo)).collect())
}

/// Normalizes like [`normalize_saliency`] but drops entries whose
/// pre-rounding score falls below `floor`, returning the surviving
/// `(original index, rounded score)` pairs.
pub fn normalize_and_filter_saliency(
    raw: &[f64],
    floor: f64,
) -> Result<Vec<(usize, f64)>, DataError> {
    Ok(normalize_saliency_raw(raw)?
        .into_iter()
        .enumerate()
        .filter(|&(_, s)| s >= floor)
        .map(|(i, s)| (i, s.round()))
        .collect())
}

/// N frame timestamps over `[0, duration)`: train mode draws one uniform
/// point inside each of N equal segments, test mode takes the midpoints.
/// Output is strictly increasing either way.
pub fn sample_frames(
    duration: f64,
    n: usize,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, DataError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(DataError::BadDuration(duration));
    }
    if n == 0 {
        return Err(DataError::BadFrameCount);
    }
    let seg = duration / n as f64;
    Ok((0..n)
        .map(|i| match phase {
            Phase::Train => rng.gen_range(i as f64 * seg..(i + 1) as f64 * seg),
            Phase::Test => (i as f64 + 0.5) * seg,
        })
        .collect())
}

/// The closed caption codebook for synthetic events. Each caption has a
/// fixed feature pattern, so a model can learn caption-to-signal
/// associations.
pub const CAPTIONS: [&str; 16] = [
    "a person slices fresh vegetables",
    "the dog catches a ball",
    "someone pours hot coffee",
    "a child stacks wooden blocks",
    "the chef flips a pancake",
    "a woman ties her shoes",
    "the crowd cheers loudly",
    "a man paints the fence",
    "the cat climbs a tree",
    "someone lights the candles",
    "a cyclist rounds the corner",
    "the band starts playing",
    "a girl opens her gift",
    "workers load the truck",
    "the plane touches down",
    "a boy kicks the ball",
];

/// Deterministic feature pattern for a caption: the signal added to the
/// track wherever that event is active. Fixed across runs and seeds.
pub fn caption_pattern(caption_id: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + caption_id as u64);
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// One planted event inside a synthetic video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub start: f64,
    pub end: f64,
    pub caption_id: usize,
    pub saliency: f64,
}

impl PlantedEvent {
    pub fn caption(&self) -> &'static str {
        CAPTIONS[self.caption_id % CAPTIONS.len()]
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// The per-time signal of a synthetic video: a small deterministic
/// background plus one pattern bump per planted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub dim: usize,
    pub bumps: Vec<(f64, f64, Vec<f64>)>,
}

impl FeatureTrack {
    /// d-dimensional signal value at time `t`.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let mut v: Vec<f64> =
            (0..self.dim).map(|c| 0.1 * (0.07 * t + c as f64).sin()).collect();
        for (start, end, pattern) in &self.bumps {
            if t >= *start && t < *end {
                for (x, p) in v.iter_mut().zip(pattern) {
                    *x += p;
                }
            }
        }
        v
    }
}

/// Stand-in for a real video: a duration, a feature track, and the events
/// planted into it (the annotation may expose only a subset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticVideo {
    pub duration: f64,
    pub track: FeatureTrack,
    pub events: Vec<PlantedEvent>,
}

/// An annotation paired with the synthetic video it grounds into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub annotation: VtgAnnotation,
    pub video: SyntheticVideo,
}

/// Counts and knobs for synthetic dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub mr: usize,
    pub dvc: usize,
    pub vs: usize,
    pub vhd: usize,
    pub duration_range: (f64, f64),
    pub feature_dim: usize,
    /// Upper bound on events planted per video (at least one always fits).
    #[serde(default = "default_max_events")]
    pub max_events: usize,
}

fn default_max_events() -> usize {
    3
}

impl SynthSpec {
    /// Splits a total count by the task-mix proportions 63.2 : 37.2 : 15.2 :
    /// 3.9 (moment retrieval : dense captioning : summarization : highlight
    /// detection), giving rounding leftovers to moment retrieval.
    pub fn from_total(total: usize, duration_range: (f64, f64), feature_dim: usize) -> Self {
        const RATIOS: [f64; 4] = [63.2, 37.2, 15.2, 3.9];
        let sum: f64 = RATIOS.iter().sum();
        let dvc = (total as f64 * RATIOS[1] / sum).round() as usize;
        let vs = (total as f64 * RATIOS[2] / sum).round() as usize;
        let vhd = (total as f64 * RATIOS[3] / sum).round() as usize;
        let mr = total.saturating_sub(dvc + vs + vhd);
        SynthSpec { mr, dvc, vs, vhd, duration_range, feature_dim, max_events: default_max_events() }
    }

    pub fn total(&self) -> usize {
        self.mr + self.dvc + self.vs + self.vhd
    }
}

/// Plants 1..=max_events non-overlapping grid-aligned events, left to right.
fn plant_events(
    duration: f64,
    max_events: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<PlantedEvent> {
    let want = rng.gen_range(1..=max_events);
    let mut caption_ids: Vec<usize> = (0..CAPTIONS.len()).collect();
    let mut events = Vec::new();
    let mut cursor = 0.0;
    for _ in 0..want {
        let gap = TIME_GRID * rng.gen_range(0..=2) as f64;
        let len = EVENT_LENGTHS[rng.gen_range(0..EVENT_LENGTHS.len())];
        let start = cursor + gap;
        let end = start + len;
        if end > duration {
            break;
        }
        let caption_id = caption_ids.swap_remove(rng.gen_range(0..caption_ids.len()));
        let saliency = rng.gen_range(1..=5) as f64;
        events.push(PlantedEvent { start, end, caption_id, saliency });
        cursor = end;
    }
    if events.is_empty() {
        // duration always admits one shortest event at the origin
        let caption_id = rng.gen_range(0..CAPTIONS.len());
        events.push(PlantedEvent {
            start: 0.0,
            end: EVENT_LENGTHS[0].min(duration),
            caption_id,
            saliency: rng.gen_range(1..=5) as f64,
        });
    }
    events
}

fn video_from_events(duration: f64, events: Vec<PlantedEvent>, dim: usize) -> SyntheticVideo {
    let bumps = events
        .iter()
        .map(|e| (e.start, e.end, caption_pattern(e.caption_id, dim)))
        .collect();
    SyntheticVideo { duration, track: FeatureTrack { dim, bumps }, events }
}

fn draw_duration(range: (f64, f64), rng: &mut ChaCha8Rng) -> f64 {
    // snap to the grid so events tile cleanly
    let cells_lo = (range.0 / TIME_GRID).ceil() as u64;
    let cells_hi = (range.1 / TIME_GRID).floor() as u64;
    let cells = if cells_lo >= cells_hi { cells_lo } else { rng.gen_range(cells_lo..=cells_hi) };
    cells as f64 * TIME_GRID
}

fn event_segment(e: &PlantedEvent) -> Segment {
    Segment::new(e.start, e.end).expect("planted events are ordered").with_caption(e.caption())
}

fn event_highlight(e: &PlantedEvent) -> HighlightFrame {
    HighlightFrame::new(e.midpoint(), e.saliency)
        .expect("planted saliency is in range")
        .with_caption(e.caption())
}

/// Generates the synthetic dataset: seeded, deterministic, with every
/// annotation satisfying its invariants and feature bumps aligned to spans.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthSample>, DataError> {
    if !(spec.duration_range.0 > 0.0 && spec.duration_range.1 >= spec.duration_range.0) {
        return Err(DataError::BadDurationRange {
            lo: spec.duration_range.0,
            hi: spec.duration_range.1,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.total());
    let tasks = [
        (TaskKind::MomentRetrieval, spec.mr),
        (TaskKind::DenseCaptioning, spec.dvc),
        (TaskKind::Summarization, spec.vs),
        (TaskKind::HighlightDetection, spec.vhd),
    ];
    for (task, count) in tasks {
        for i in 0..count {
            let duration = draw_duration(spec.duration_range, &mut rng);
            let mut events = plant_events(duration, spec.max_events.max(1), &mut rng);
            let video_id = format!("synth-{}-{:05}", task.name(), i);
            let annotation = match task {
                TaskKind::MomentRetrieval => {
                    let target = rng.gen_range(0..events.len());
                    let e = &events[target];
                    VtgAnnotation {
                        video_id,
                        duration,
                        task,
                        query: e.caption().to_string(),
                        events: vec![event_segment(e)],
                        highlights: vec![],
                    }
                }
                TaskKind::DenseCaptioning => VtgAnnotation {
                    video_id,
                    duration,
                    task,
                    query: String::new(),
                    events: events.iter().map(event_segment).collect(),
                    highlights: vec![],
                },
                TaskKind::Summarization | TaskKind::HighlightDetection => {
                    // guarantee at least one salient event so highlight
                    // metrics have positives
                    let bump = rng.gen_range(0..events.len());
                    events[bump].saliency = rng.gen_range(4..=5) as f64;
                    VtgAnnotation {
                        video_id,
                        duration,
                        task,
                        query: String::new(),
                        events: vec![],
                        highlights: events.iter().map(event_highlight).collect(),
                    }
                }
            };
            annotation.validate().expect("generator output must satisfy invariants");
            out.push(SynthSample {
                annotation,
                video: video_from_events(duration, events, spec.feature_dim),
            });
        }
    }
    Ok(out)
}

/// Writes one JSON value per line.
pub fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one JSON value per line, reporting the offending line on failure.
pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DataError::BadLine { line: idx + 1, source: e })?,
        );
    }
    Ok(out)
}

/// Loads and validates annotations.
/// Reads annotations from JSONL, accepting bare annotation lines and full
/// dataset lines (annotation + video) interchangeably, so generator output
/// can feed the scorers directly. No semantic validation: predicted spans
/// are allowed to violate invariants (e.g. overrun the video) and get
/// scored accordingly rather than rejected.
pub fn load_annotations_unchecked(path: &Path) -> Result<Vec<VtgAnnotation>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut anns = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ann = match serde_json::from_str::<VtgAnnotation>(&line) {
            Ok(a) => a,
            Err(bare_err) => serde_json::from_str::<SynthSample>(&line)
                .map(|s| s.annotation)
                .map_err(|_| DataError::BadLine { line: idx + 1, source: bare_err })?,
        };
        anns.push(ann);
    }
    Ok(anns)
}

/// [`load_annotations_unchecked`] plus invariant validation on every line —
/// the right loader for ground truth.
pub fn load_annotations(path: &Path) -> Result<Vec<VtgAnnotation>, DataError> {
    let anns = load_annotations_unchecked(path)?;
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time_tokenizer::TimeVocab;
    use crate::vtg_metrics::parse_prediction;
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn vocab() -> TimeVocab {
        let mut map = BTreeMap::new();
        for k in 0..=9u8 {
            map.insert(char::from(b'0' + k), 5 + k as u32);
        }
        map.insert('.', 15);
        TimeVocab::new(20, map).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn dvc_annotation() -> VtgAnnotation {
        VtgAnnotation {
            video_id: "v1".into(),
            duration: 120.0,
            task: TaskKind::DenseCaptioning,
            query: String::new(),
            events: vec![Segment::new(90.0, 102.0)
                .unwrap()
                .with_caption("spreading butter on two slices of white bread")],
            highlights: vec![],
        }
    }

    #[test]
    fn validate_rejects_out_of_duration_and_empty_payload() {
        let mut a = dvc_annotation();
        a.duration = 100.0;
        assert!(matches!(
            a.validate().unwrap_err(),
            DataError::TimestampBeyondDuration { .. }
        ));
        let mut b = dvc_annotation();
        b.events.clear();
        assert!(matches!(b.validate().unwrap_err(), DataError::PayloadMissing { .. }));
    }

    #[test]
    fn format_dvc_answer_line() {
        let s = format_sample(&dvc_annotation(), false, &vocab(), &mut rng(1)).unwrap();
        assert_eq!(
            s.answer,
            "0090.0 - 0102.0 seconds, spreading butter on two slices of white bread"
        );
    }

    #[test]
    fn format_vhd_answer_line() {
        let a = VtgAnnotation {
            video_id: "v2".into(),
            duration: 120.0,
            task: TaskKind::HighlightDetection,
            query: String::new(),
            events: vec![],
            highlights: vec![HighlightFrame::new(82.0, 5.0)
                .unwrap()
                .with_caption("the detailed demonstration of the core technique")],
        };
        let s = format_sample(&a, false, &vocab(), &mut rng(2)).unwrap();
        assert_eq!(
            s.answer,
            "At 0082.0 second, significance score: 5, the detailed demonstration of the core technique"
        );
    }

    #[test]
    fn format_answers_round_trip_through_parser() {
        let v = vocab();
        for use_tokens in [false, true] {
            let s = format_sample(&dvc_annotation(), use_tokens, &v, &mut rng(3)).unwrap();
            let parsed = parse_prediction(&s.answer, TaskKind::DenseCaptioning);
            assert!(parsed.is_clean(), "mode tokens={use_tokens}: {:?}", parsed.diagnostics);
            assert_eq!(parsed.segments.len(), 1);
            assert_eq!(parsed.segments[0].start, 90.0);
            assert_eq!(parsed.segments[0].end, 102.0);
        }
    }

    #[test]
    fn format_prompt_substitutes_query() {
        let a = VtgAnnotation {
            video_id: "v3".into(),
            duration: 60.0,
            task: TaskKind::MomentRetrieval,
            query: "the dog catches a ball".into(),
            events: vec![Segment::new(5.0, 15.0).unwrap()],
            highlights: vec![],
        };
        let s = format_sample(&a, false, &vocab(), &mut rng(4)).unwrap();
        assert!(s.prompt.contains("the dog catches a ball"));
        assert!(!s.prompt.contains("{query}"));
    }

    #[test]
    fn derive_mr_one_per_event() {
        let mut dvc = dvc_annotation();
        dvc.events.push(Segment::new(10.0, 20.0).unwrap().with_caption("second event"));
        dvc.events.push(Segment::new(30.0, 40.0).unwrap().with_caption("third event"));
        let mrs = derive_mr_from_dvc(&dvc).unwrap();
        assert_eq!(mrs.len(), 3);
        for (mr, ev) in mrs.iter().zip(&dvc.events) {
            assert_eq!(mr.task, TaskKind::MomentRetrieval);
            assert_eq!(mr.query, ev.caption.clone().unwrap());
            assert_eq!(mr.events, vec![ev.clone()]);
            assert_eq!(mr.duration, dvc.duration);
        }
    }

    #[test]
    fn derive_mr_empty_events_gives_empty_list() {
        let mut dvc = dvc_annotation();
        dvc.events.clear();
        assert!(derive_mr_from_dvc(&dvc).unwrap().is_empty());
    }

    #[test]
    fn derive_mr_rejects_non_dvc() {
        let mut a = dvc_annotation();
        a.task = TaskKind::MomentRetrieval;
        assert!(matches!(
            derive_mr_from_dvc(&a).unwrap_err(),
            DataError::TaskMismatch { expected: "dvc", got: "mr" }
        ));
    }

    #[test]
    fn saliency_endpoints_and_midpoint() {
        assert_eq!(normalize_saliency(&[0.0, 0.5, 1.0]).unwrap(), vec![1.0, 3.0, 5.0]);
    }

    #[test]
    fn saliency_constant_maps_to_five() {
        assert_eq!(normalize_saliency(&[0.7, 0.7, 0.7]).unwrap(), vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn saliency_filter_keeps_top_cluster() {
        // raw [0.1, 0.2, 0.9, 1.0] normalizes to [1.0, 1.444, 4.556, 5.0];
        // the floor at 2 drops the low pair
        let kept = normalize_and_filter_saliency(&[0.1, 0.2, 0.9, 1.0], DEFAULT_SALIENCY_FLOOR)
            .unwrap();
        assert_eq!(kept, vec![(2, 5.0), (3, 5.0)]);
    }

    #[test]
    fn saliency_empty_is_an_error() {
        assert!(matches!(normalize_saliency(&[]).unwrap_err(), DataError::EmptySaliency));
    }

    #[test]
    fn sample_frames_test_midpoints() {
        let got = sample_frames(10.0, 5, Phase::Test, &mut rng(5)).unwrap();
        assert_eq!(got, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn sample_frames_train_within_segments() {
        let n = 8;
        let duration = 96.0;
        let got = sample_frames(duration, n, Phase::Train, &mut rng(6)).unwrap();
        let seg = duration / n as f64;
        for (i, t) in got.iter().enumerate() {
            assert!(*t >= i as f64 * seg && *t < (i + 1) as f64 * seg);
        }
    }

    #[test]
    fn sample_frames_deterministic() {
        let a = sample_frames(50.0, 6, Phase::Train, &mut rng(7)).unwrap();
        let b = sample_frames(50.0, 6, Phase::Train, &mut rng(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_frames_rejects_bad_input() {
        assert!(sample_frames(0.0, 5, Phase::Test, &mut rng(8)).is_err());
        assert!(sample_frames(10.0, 0, Phase::Test, &mut rng(8)).is_err());
    }

    #[test]
    fn synth_zero_counts_give_empty_dataset() {
        let spec = SynthSpec { mr: 0, dvc: 0, vs: 0, vhd: 0, duration_range: (60.0, 90.0), feature_dim: 4, max_events: 3 };
        assert!(synth_generate(&spec, 1).unwrap().is_empty());
    }

    #[test]
    fn synth_annotations_satisfy_invariants() {
        let spec = SynthSpec { mr: 20, dvc: 10, vs: 5, vhd: 5, duration_range: (60.0, 120.0), feature_dim: 4, max_events: 3 };
        let data = synth_generate(&spec, 2).unwrap();
        assert_eq!(data.len(), 40);
        for s in &data {
            s.annotation.validate().unwrap();
            assert_eq!(s.annotation.duration, s.video.duration);
            // feature bumps must align with planted events
            for e in &s.video.events {
                let inside = s.video.track.sample(e.midpoint());
                let outside = s.video.track.sample(e.start - 0.5);
                assert_ne!(inside, outside, "event must move the track");
            }
        }
    }

    #[test]
    fn synth_highlight_tasks_always_have_a_positive() {
        let spec = SynthSpec { mr: 0, dvc: 0, vs: 15, vhd: 15, duration_range: (60.0, 90.0), feature_dim: 4, max_events: 3 };
        for s in synth_generate(&spec, 3).unwrap() {
            assert!(s.annotation.highlights.iter().any(|h| h.score >= 4.0));
        }
    }

    #[test]
    fn synth_same_seed_is_byte_identical() {
        let spec = SynthSpec::from_total(30, (60.0, 90.0), 4);
        let a = synth_generate(&spec, 9).unwrap();
        let b = synth_generate(&spec, 9).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn synth_ratio_split_accounts_for_every_sample() {
        let spec = SynthSpec::from_total(1000, (60.0, 90.0), 4);
        assert_eq!(spec.total(), 1000);
        // moment retrieval dominates the mix
        assert!(spec.mr > spec.dvc && spec.dvc > spec.vs && spec.vs > spec.vhd);
        assert!(spec.vhd > 0);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anns.jsonl");
        let spec = SynthSpec { mr: 5, dvc: 3, vs: 2, vhd: 2, duration_range: (60.0, 90.0), feature_dim: 3, max_events: 3 };
        let data = synth_generate(&spec, 10).unwrap();
        let anns: Vec<VtgAnnotation> = data.iter().map(|s| s.annotation.clone()).collect();
        save_jsonl(&path, &anns).unwrap();
        let back = load_annotations(&path).unwrap();
        assert_eq!(back, anns);

        let samples_path = dir.path().join("samples.jsonl");
        save_jsonl(&samples_path, &data).unwrap();
        let back: Vec<SynthSample> = load_jsonl(&samples_path).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn jsonl_reports_offending_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&dvc_annotation()).unwrap();
        std::fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match load_jsonl::<VtgAnnotation>(&path) {
            Err(DataError::BadLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected BadLine, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn saliency_stays_in_range_and_monotone(raw in proptest::collection::vec(-100.0..100.0f64, 1..20)) {
            let out = normalize_saliency(&raw).unwrap();
            for &s in &out {
                prop_assert!((1.0..=5.0).contains(&s));
            }
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(out[i] <= out[j]);
                    }
                }
            }
        }

        #[test]
        fn frames_strictly_increasing(seed in 0u64..200, n in 1usize..40) {
            let mut r = rng(seed);
            let duration = r.gen_range(10.0..200.0);
            for phase in [Phase::Train, Phase::Test] {
                let ts = sample_frames(duration, n, phase, &mut r).unwrap();
                prop_assert_eq!(ts.len(), n);
                for w in ts.windows(2) {
                    prop_assert!(w[0] < w[1]);
                }
                prop_assert!(ts[0] >= 0.0 && ts[n - 1] < duration);
            }
        }
    }
}

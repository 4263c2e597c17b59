//! A small, fully trainable grounding pipeline over synthetic videos.
//!
//! The pipeline wires every timestamp mechanism in this crate into one
//! differentiable path: frame features are projected into visual tokens,
//! the sequence/absolute-time tables are added, a slot dispatcher compresses
//! the tokens to a fixed budget of `K` slots, and a one-block pre-norm
//! decoder (RMSNorm, causal self-attention, SiLU feed-forward) predicts the
//! answer text token by token over a vocabulary whose top eleven ids are the
//! absolute-time tokens. Everything runs in f64 on a reverse-mode tape, and
//! training is plain SGD on answer-token cross-entropy.

pub mod tape;
pub mod text;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;
use crate::ste_embedding::{SteError, SteGrads, SteTable, TokenGrid};
use crate::time_tokenizer::{extend_and_transfer, EmbeddingPair, TimeTokenError, TimeVocab};
use crate::token_compression::{CompressionError, SlotDispatcher};
use crate::vtg_data::{format_sample, sample_frames, DataError, Phase, SynthSample, SyntheticVideo};

pub use tape::{NodeId, Tape};
pub use text::{TextCodec, TextError};

/// Seed base for the fixed per-position projections that turn frame features
/// into visual tokens. Independent of every run seed so that the mapping
/// from video to tokens is a property of the architecture, not of a run.
const PROJECTION_SEED: u64 = 0x7A0E_1234;

/// Temperatures at or below this sample greedily (exact argmax, lowest id on
/// ties), making the zero-temperature limit deterministic.
pub const GREEDY_TEMPERATURE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds the {max}-position budget")]
    SequenceTooLong { len: usize, max: usize },
    #[error("video feature dim {video} does not match configured feature dim {cfg}")]
    FeatureDimMismatch { video: usize, cfg: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite ({loss}) at step {step}; aborting training")]
    NonFiniteLoss { step: usize, loss: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ste(#[from] SteError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Time(#[from] TimeTokenError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    Json(#[from] serde_json::Error),
}

/// Architecture and decoding knobs. [`ModelConfig::default`] is the
/// full-scale geometry (96 frames, 32 tokens per frame, 256 slots);
/// [`ModelConfig::toy`] shrinks everything to trainable-on-CPU sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// N: frames sampled per video.
    pub frames: usize,
    /// M: visual tokens per frame.
    pub tokens_per_frame: usize,
    /// d: model width.
    pub dim: usize,
    /// K: slot budget the visual tokens are compressed to.
    pub slots: usize,
    /// Width of the synthetic feature tracks this model reads.
    pub feature_dim: usize,
    /// Rows in the absolute-time table (one per integer second).
    pub time_rows: usize,
    /// Positions available to slots + text.
    pub max_seq_len: usize,
    /// Default sampling temperature for generation.
    pub temperature: f64,
    /// Whether answers render timestamps as dedicated time tokens.
    pub use_time_tokens: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 96,
            tokens_per_frame: 32,
            dim: 32,
            slots: 256,
            feature_dim: 12,
            time_rows: 8192,
            max_seq_len: 384,
            temperature: 1.0,
            use_time_tokens: true,
        }
    }
}

impl ModelConfig {
    /// Desk-scale geometry: 8 frames x 4 tokens compressed to 16 slots.
    pub fn toy() -> Self {
        ModelConfig {
            frames: 8,
            tokens_per_frame: 4,
            dim: 32,
            slots: 16,
            feature_dim: 12,
            time_rows: 256,
            max_seq_len: 128,
            temperature: 1.0,
            use_time_tokens: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.frames == 0 || self.tokens_per_frame == 0 || self.dim == 0 {
            return fail("frames, tokens_per_frame, and dim must be positive".into());
        }
        if self.slots == 0 || self.slots > self.frames * self.tokens_per_frame {
            return fail(format!(
                "slots must be in 1..={} (frames x tokens_per_frame), got {}",
                self.frames * self.tokens_per_frame,
                self.slots
            ));
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive".into());
        }
        if self.time_rows == 0 {
            return fail("time_rows must be positive".into());
        }
        if self.max_seq_len < self.slots + 8 {
            return fail(format!(
                "max_seq_len {} leaves no room for text after {} slots",
                self.max_seq_len, self.slots
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }
}

/// Samples `cfg.frames` timestamps (uniform-in-segment when training,
/// segment midpoints at test time) and projects the track's feature vector
/// at each into `cfg.tokens_per_frame` visual tokens via fixed seeded
/// projections.
pub fn encode_video(
    video: &SyntheticVideo,
    cfg: &ModelConfig,
    phase: Phase,
    rng: &mut ChaCha8Rng,
) -> Result<TokenGrid, ModelError> {
    if video.track.dim != cfg.feature_dim {
        return Err(ModelError::FeatureDimMismatch {
            video: video.track.dim,
            cfg: cfg.feature_dim,
        });
    }
    let times = sample_frames(video.duration, cfg.frames, phase, rng)?;
    let projections = token_projections(cfg);
    let mut values = Matrix::zeros(cfg.frames * cfg.tokens_per_frame, cfg.dim);
    for (i, &t) in times.iter().enumerate() {
        let feat = video.track.sample(t);
        for (j, proj) in projections.iter().enumerate() {
            let row = values.row_mut(i * cfg.tokens_per_frame + j);
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = proj
                    .row(c)
                    .iter()
                    .zip(&feat)
                    .map(|(w, f)| w * f)
                    .sum();
            }
        }
    }
    Ok(TokenGrid::new(cfg.frames, cfg.tokens_per_frame, values, times)?)
}

/// One fixed `dim x feature_dim` projection per token position within a
/// frame, seeded by position only.
fn token_projections(cfg: &ModelConfig) -> Vec<Matrix> {
    (0..cfg.tokens_per_frame)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED.wrapping_add(j as u64));
            Matrix::random(
                cfg.dim,
                cfg.feature_dim,
                1.0 / (cfg.feature_dim as f64).sqrt(),
                &mut rng,
            )
        })
        .collect()
}

/// A training example with the text already tokenized. The video is kept so
/// every visit can resample frame times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainExample {
    pub video: SyntheticVideo,
    pub prompt_ids: Vec<u32>,
    pub answer_ids: Vec<u32>,
}

/// Per-step losses from a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn first_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Ids of the parameter leaves on a forward tape, in SGD order.
struct ParamLeaves {
    emb: NodeId,
    head: NodeId,
    pos: NodeId,
    w_s: NodeId,
    w_t: NodeId,
    phi: NodeId,
    w_q: NodeId,
    w_k: NodeId,
    w_v: NodeId,
    w_o: NodeId,
    ff1: NodeId,
    ff2: NodeId,
}

/// One example's loss and the gradients most often certified against
/// finite differences: the slot dispatcher and both time tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGrads {
    pub loss: f64,
    pub phi: Matrix,
    pub w_s: Matrix,
    pub w_t: Matrix,
}

/// A completed forward pass for one example.
struct TapeForward {
    tape: Tape,
    loss: NodeId,
    /// Per-position logits; training reads only the loss, tests inspect this.
    #[cfg_attr(not(test), allow(dead_code))]
    logits: NodeId,
    leaves: ParamLeaves,
}

/// The grounding pipeline end to end: projections -> time tables -> slots ->
/// decoder -> extended-vocabulary logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingModel {
    pub cfg: ModelConfig,
    pub codec: TextCodec,
    pub token_embedding: Matrix,
    pub lm_head: Matrix,
    pub pos_embedding: Matrix,
    pub ste: SteTable,
    pub dispatcher: SlotDispatcher,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ff1: Matrix,
    pub ff2: Matrix,
}

impl GroundingModel {
    /// Fresh model. Base embeddings and attention projections are small
    /// random values; the time table, the attention output projection, and
    /// the second feed-forward layer start at zero so the residual stream is
    /// initially the identity; the eleven time-token rows are bitwise copies
    /// of their digit rows.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let codec = TextCodec::standard();
        let vocab = codec.time_vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let base = codec.base_size() as usize;

        let base_pair = EmbeddingPair {
            token_embedding: Matrix::random(base, d, 0.08, &mut rng),
            lm_head: Matrix::random(base, d, 0.08, &mut rng),
        };
        let pair = extend_and_transfer(&base_pair, &vocab)?;

        let pos_embedding = Matrix::random(cfg.max_seq_len, d, 0.02, &mut rng);
        // The frame embedding must be loud enough to survive slot mixing:
        // it is the only stable "which frame" signature the decoder can use
        // to read timestamps out of slot content.
        let w_s = Matrix::random(cfg.frames, d, 0.3, &mut rng);
        let ste = SteTable::new(w_s, cfg.time_rows);
        // A sharp dispatcher breaks the slot symmetry from the start; with
        // near-zero logits every slot would average the whole grid and no
        // temporal signal would reach the decoder.
        let dispatcher = SlotDispatcher::new(Matrix::random(cfg.slots, d, 2.0, &mut rng))?;

        let attn_scale = 1.0 / (d as f64).sqrt();
        let w_q = Matrix::random(d, d, attn_scale, &mut rng);
        let w_k = Matrix::random(d, d, attn_scale, &mut rng);
        let w_v = Matrix::random(d, d, attn_scale, &mut rng);
        let w_o = Matrix::zeros(d, d);
        let ff1 = Matrix::random(d, 2 * d, attn_scale, &mut rng);
        let ff2 = Matrix::zeros(2 * d, d);

        Ok(GroundingModel {
            cfg,
            codec,
            token_embedding: pair.token_embedding,
            lm_head: pair.lm_head,
            pos_embedding,
            ste,
            dispatcher,
            w_q,
            w_k,
            w_v,
            w_o,
            ff1,
            ff2,
        })
    }

    pub fn time_vocab(&self) -> TimeVocab {
        self.codec.time_vocab()
    }

    /// Renders one synthetic sample into a [`TrainExample`]: seeded template
    /// choice, answer in the task's line format, both sides tokenized.
    pub fn prepare_example(
        &self,
        sample: &SynthSample,
        rng: &mut ChaCha8Rng,
    ) -> Result<TrainExample, ModelError> {
        let vocab = self.time_vocab();
        let formatted =
            format_sample(&sample.annotation, self.cfg.use_time_tokens, &vocab, rng)?;
        Ok(TrainExample {
            video: sample.video.clone(),
            prompt_ids: self.codec.encode(&formatted.prompt),
            answer_ids: self.codec.encode(&formatted.answer),
        })
    }

    /// Full differentiable forward over one example; the loss is the mean
    /// cross-entropy of the answer tokens plus the closing `<eos>`.
    fn forward_loss(
        &self,
        grid: &TokenGrid,
        prompt_ids: &[u32],
        answer_ids: &[u32],
    ) -> Result<TapeForward, ModelError> {
        let k = self.cfg.slots;
        let mut text_ids: Vec<usize> = Vec::with_capacity(prompt_ids.len() + answer_ids.len() + 2);
        text_ids.push(self.codec.bos() as usize);
        text_ids.extend(prompt_ids.iter().map(|&t| t as usize));
        text_ids.extend(answer_ids.iter().map(|&t| t as usize));
        text_ids.push(self.codec.eos() as usize);
        let seq_len = k + text_ids.len();
        if seq_len > self.cfg.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: seq_len,
                max: self.cfg.max_seq_len,
            });
        }

        // Row indices into the sequence table (one per token: its frame) and
        // the time table (its frame's rounded second).
        let mut frame_rows = Vec::with_capacity(grid.values().rows());
        let mut time_rows = Vec::with_capacity(grid.values().rows());
        for (i, &t) in grid.frame_times().iter().enumerate() {
            let row = self.ste.time_row(t)?;
            for _ in 0..grid.tokens_per_frame() {
                frame_rows.push(i);
                time_rows.push(row);
            }
        }

        let mut tape = Tape::new();
        let leaves = ParamLeaves {
            emb: tape.leaf(self.token_embedding.clone()),
            head: tape.leaf(self.lm_head.clone()),
            pos: tape.leaf(self.pos_embedding.clone()),
            w_s: tape.leaf(self.ste.w_s().clone()),
            w_t: tape.leaf(self.ste.w_t().clone()),
            phi: tape.leaf(self.dispatcher.phi().clone()),
            w_q: tape.leaf(self.w_q.clone()),
            w_k: tape.leaf(self.w_k.clone()),
            w_v: tape.leaf(self.w_v.clone()),
            w_o: tape.leaf(self.w_o.clone()),
            ff1: tape.leaf(self.ff1.clone()),
            ff2: tape.leaf(self.ff2.clone()),
        };

        // Visual tokens with both time tables added.
        let z = tape.leaf(grid.values().clone());
        let seq_rows = tape.gather_rows(leaves.w_s, frame_rows);
        let time_rows_node = tape.gather_rows(leaves.w_t, time_rows);
        let ste_sum = tape.add(seq_rows, time_rows_node);
        let zhat = tape.add(z, ste_sum);

        let logits = self.decoder_logits(&mut tape, zhat, &text_ids, &leaves);

        // Position p predicts sequence position p+1; only answer tokens and
        // the final <eos> count toward the loss.
        let first_answer = k + 1 + prompt_ids.len();
        let mut targets = vec![0usize; seq_len];
        let mut mask = vec![false; seq_len];
        for p in 0..seq_len - 1 {
            let next = p + 1;
            if next >= first_answer {
                targets[p] = text_ids[next - k];
                mask[p] = true;
            }
        }
        let loss = tape.cross_entropy_masked(logits, targets, mask);
        Ok(TapeForward {
            tape,
            loss,
            logits,
            leaves,
        })
    }

    /// Slots + text through the decoder block to per-position logits.
    /// `zhat` must already carry the time tables.
    fn decoder_logits(
        &self,
        tape: &mut Tape,
        zhat: NodeId,
        text_ids: &[usize],
        leaves: &ParamLeaves,
    ) -> NodeId {
        let d = self.cfg.dim;
        let seq_len = self.cfg.slots + text_ids.len();

        // Compress to K slots: softmax(Φ ẑᵀ) ẑ.
        let zt = tape.transpose(zhat);
        let dispatch_logits = tape.matmul(leaves.phi, zt);
        let dispatch = tape.softmax_rows(dispatch_logits, false);
        let slots = tape.matmul(dispatch, zhat);

        let text_emb = tape.gather_rows(leaves.emb, text_ids.to_vec());
        let stacked = tape.concat_rows(vec![slots, text_emb]);
        let pos = tape.gather_rows(leaves.pos, (0..seq_len).collect());
        let x = tape.add(stacked, pos);

        // Pre-norm attention with a zero-initialized output projection.
        let a = tape.rms_norm(x);
        let q = tape.matmul(a, leaves.w_q);
        let kk = tape.matmul(a, leaves.w_k);
        let v = tape.matmul(a, leaves.w_v);
        let kt = tape.transpose(kk);
        let scores = tape.matmul(q, kt);
        let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
        let att = tape.softmax_rows(scaled, true);
        let ctx = tape.matmul(att, v);
        let proj = tape.matmul(ctx, leaves.w_o);
        let x2 = tape.add(x, proj);

        // Pre-norm feed-forward, SiLU, zero-initialized second layer.
        let b = tape.rms_norm(x2);
        let h = tape.matmul(b, leaves.ff1);
        let hs = tape.silu(h);
        let ff_out = tape.matmul(hs, leaves.ff2);
        let x3 = tape.add(x2, ff_out);

        let y = tape.rms_norm(x3);
        let head_t = tape.transpose(leaves.head);
        tape.matmul(y, head_t)
    }

    /// SGD over every parameter from the gradients on `fw`'s tape, then
    /// marks the touched time rows as trained.
    fn apply_step(&mut self, fw: &TapeForward, grid: &TokenGrid, lr: f64) -> Result<(), ModelError> {
        let t = &fw.tape;
        sgd(&mut self.token_embedding, t.grad(fw.leaves.emb), lr);
        sgd(&mut self.lm_head, t.grad(fw.leaves.head), lr);
        sgd(&mut self.pos_embedding, t.grad(fw.leaves.pos), lr);
        sgd(self.dispatcher.phi_mut(), t.grad(fw.leaves.phi), lr);
        sgd(&mut self.w_q, t.grad(fw.leaves.w_q), lr);
        sgd(&mut self.w_k, t.grad(fw.leaves.w_k), lr);
        sgd(&mut self.w_v, t.grad(fw.leaves.w_v), lr);
        sgd(&mut self.w_o, t.grad(fw.leaves.w_o), lr);
        sgd(&mut self.ff1, t.grad(fw.leaves.ff1), lr);
        sgd(&mut self.ff2, t.grad(fw.leaves.ff2), lr);

        // The time tables update through their sparse-row interface so the
        // trained-second bookkeeping stays in one place.
        let mut grads = SteGrads::default();
        let ws_grad = t.grad(fw.leaves.w_s);
        for i in 0..ws_grad.rows() {
            grads.w_s.insert(i, ws_grad.row(i).to_vec());
        }
        let wt_grad = t.grad(fw.leaves.w_t);
        let mut touched = std::collections::BTreeSet::new();
        for &t_sec in grid.frame_times() {
            touched.insert(self.ste.time_row(t_sec)?);
        }
        for &row in &touched {
            grads.w_t.insert(row, wt_grad.row(row).to_vec());
        }
        self.ste.apply_grads(&grads, lr);
        for row in touched {
            self.ste.mark_trained(row);
        }
        Ok(())
    }

    /// Plain-SGD training: each step draws one example, resamples its frame
    /// times, runs forward/backward, and updates every parameter. Aborts
    /// with diagnostics if the loss leaves the reals.
    pub fn train(
        &mut self,
        data: &[TrainExample],
        steps: usize,
        lr: f64,
        seed: u64,
    ) -> Result<TrainReport, ModelError> {
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let ex = &data[rng.gen_range(0..data.len())];
            let grid = encode_video(&ex.video, &self.cfg, Phase::Train, &mut rng)?;
            let mut fw = self.forward_loss(&grid, &ex.prompt_ids, &ex.answer_ids)?;
            let loss = fw.tape.scalar(fw.loss);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { step, loss });
            }
            losses.push(loss);
            fw.tape.backward(fw.loss);
            self.apply_step(&fw, &grid, lr)?;
        }
        Ok(TrainReport { losses })
    }

    /// Loss of one example without touching any parameter.
    pub fn example_loss(
        &self,
        grid: &TokenGrid,
        prompt_ids: &[u32],
        answer_ids: &[u32],
    ) -> Result<f64, ModelError> {
        let fw = self.forward_loss(grid, prompt_ids, answer_ids)?;
        Ok(fw.tape.scalar(fw.loss))
    }

    /// Loss of one example plus its gradients for the dispatcher and the
    /// two time tables, without touching any parameter. The time-table
    /// gradients come back dense (zero rows for untouched seconds) so they
    /// can be compared entry-wise against finite differences.
    pub fn example_grads(&self, grid: &TokenGrid, prompt_ids: &[u32], answer_ids: &[u32])
        -> Result<ExampleGrads, ModelError> {
        let mut fw = self.forward_loss(grid, prompt_ids, answer_ids)?;
        fw.tape.backward(fw.loss);
        Ok(ExampleGrads {
            loss: fw.tape.scalar(fw.loss),
            phi: fw.tape.grad(fw.leaves.phi).clone(),
            w_s: fw.tape.grad(fw.leaves.w_s).clone(),
            w_t: fw.tape.grad(fw.leaves.w_t).clone(),
        })
    }

    /// Inference logits for the token that would follow `text` over this
    /// video: the greedy decoding path, one step, exposed so callers can
    /// inspect raw scores (e.g. to certify exact logit ties at init).
    pub fn next_logits(
        &self,
        video: &SyntheticVideo,
        text: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, ModelError> {
        let grid = encode_video(video, &self.cfg, Phase::Test, rng)?;
        let zhat = self.ste.apply_test(&grid)?;
        let mut text_ids = vec![self.codec.bos() as usize];
        text_ids.extend(self.codec.encode(text).iter().map(|&t| t as usize));
        self.next_token_logits(&zhat, &text_ids)
    }

    /// Inference logits for the next token after `text_ids`, with the time
    /// tables applied in read-only (interpolating) mode.
    fn next_token_logits(
        &self,
        zhat_grid: &TokenGrid,
        text_ids: &[usize],
    ) -> Result<Vec<f64>, ModelError> {
        let seq_len = self.cfg.slots + text_ids.len();
        if seq_len > self.cfg.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: seq_len,
                max: self.cfg.max_seq_len,
            });
        }
        let mut tape = Tape::new();
        let leaves = ParamLeaves {
            emb: tape.leaf(self.token_embedding.clone()),
            head: tape.leaf(self.lm_head.clone()),
            pos: tape.leaf(self.pos_embedding.clone()),
            w_s: tape.leaf(Matrix::zeros(1, 1)),
            w_t: tape.leaf(Matrix::zeros(1, 1)),
            phi: tape.leaf(self.dispatcher.phi().clone()),
            w_q: tape.leaf(self.w_q.clone()),
            w_k: tape.leaf(self.w_k.clone()),
            w_v: tape.leaf(self.w_v.clone()),
            w_o: tape.leaf(self.w_o.clone()),
            ff1: tape.leaf(self.ff1.clone()),
            ff2: tape.leaf(self.ff2.clone()),
        };
        let zhat = tape.leaf(zhat_grid.values().clone());
        let logits = self.decoder_logits(&mut tape, zhat, text_ids, &leaves);
        Ok(tape.value(logits).row(seq_len - 1).to_vec())
    }

    /// Autoregressive generation from a raw (pre-time-table) token grid.
    /// Temperatures at or below [`GREEDY_TEMPERATURE`] decode greedily;
    /// higher values sample from softmax(logits / temperature). Stops at
    /// `<eos>`, after `max_new` tokens, or at the position budget.
    pub fn generate(
        &self,
        grid: &TokenGrid,
        prompt: &str,
        temperature: f64,
        max_new: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, ModelError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(ModelError::Config(format!(
                "generation temperature must be positive, got {temperature}"
            )));
        }
        let zhat = self.ste.apply_test(grid)?;
        let mut text_ids: Vec<usize> = Vec::new();
        text_ids.push(self.codec.bos() as usize);
        text_ids.extend(self.codec.encode(prompt).iter().map(|&t| t as usize));
        let prompt_len = text_ids.len();
        let eos = self.codec.eos() as usize;

        for _ in 0..max_new {
            if self.cfg.slots + text_ids.len() + 1 > self.cfg.max_seq_len {
                break;
            }
            let logits = self.next_token_logits(&zhat, &text_ids)?;
            let next = sample_token(&logits, temperature, rng);
            if next == eos {
                break;
            }
            text_ids.push(next);
        }

        let generated: Vec<u32> = text_ids[prompt_len..].iter().map(|&t| t as u32).collect();
        Ok(self.codec.decode(&generated)?)
    }

    /// Test-phase end-to-end prediction for one video: deterministic
    /// midpoint frames, then [`GroundingModel::generate`].
    pub fn predict(
        &self,
        video: &SyntheticVideo,
        prompt: &str,
        temperature: f64,
        max_new: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, ModelError> {
        let grid = encode_video(video, &self.cfg, Phase::Test, rng)?;
        self.generate(&grid, prompt, temperature, max_new, rng)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let model: GroundingModel = serde_json::from_str(json)?;
        model.cfg.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn sgd(param: &mut Matrix, grad: &Matrix, lr: f64) {
    debug_assert_eq!(param.rows(), grad.rows());
    debug_assert_eq!(param.cols(), grad.cols());
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lr * g;
    }
}

/// Greedy below [`GREEDY_TEMPERATURE`] (lowest id wins ties); otherwise a
/// categorical draw from softmax(logits / temperature).
fn sample_token(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    if temperature <= GREEDY_TEMPERATURE {
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<f64> = logits.iter().map(|&v| v / temperature).collect();
    let probs = crate::numerics::softmax(&scaled).expect("non-empty logits");
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    probs.len() - 1
}

//! Token compressors: map N·M visual tokens to exactly K outputs.
//!
//! The primary method is slot-based compression — a trainable dispatcher
//! whose rows score every token and mix them with per-slot softmax weights —
//! alongside three baselines: entropy-guided selection (keep the tokens with
//! the largest k-nearest-neighbor distance), diversity-guided selection
//! (farthest-point traversal), and a single-head cross-attention layer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{softmax, Matrix};

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("no tokens to compress")]
    EmptyTokens,
    #[error("token dim {tokens} does not match parameter dim {params}")]
    DimMismatch { tokens: usize, params: usize },
    #[error("cannot select {k} of {n} tokens")]
    TooFewTokens { n: usize, k: usize },
    #[error("neighbor count must be at least 1")]
    BadNeighborCount,
    #[error("upstream gradient is {gr}x{gc}, expected {er}x{ec}")]
    UpstreamShape { gr: usize, gc: usize, er: usize, ec: usize },
    #[error("slot count must be at least 1")]
    NoSlots,
}

/// Trainable slot dispatcher: K rows of width d, one per output slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDispatcher {
    phi: Matrix,
}

impl SlotDispatcher {
    pub fn new(phi: Matrix) -> Result<Self, CompressionError> {
        if phi.rows() == 0 {
            return Err(CompressionError::NoSlots);
        }
        Ok(SlotDispatcher { phi })
    }

    /// Zero-initialized dispatcher: every slot starts as the token mean.
    pub fn zeros(k: usize, d: usize) -> Result<Self, CompressionError> {
        SlotDispatcher::new(Matrix::zeros(k, d))
    }

    pub fn random(k: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        SlotDispatcher { phi: Matrix::random(k, d, scale, rng) }
    }

    pub fn slots(&self) -> usize {
        self.phi.rows()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn phi_mut(&mut self) -> &mut Matrix {
        &mut self.phi
    }
}

/// Slot outputs plus the dispatch weights that produced them; each weight
/// row is the softmax over tokens for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressorOutput {
    pub slots: Matrix,
    pub dispatch_weights: Matrix,
}

/// Gradients of a slot compression w.r.t. the dispatcher and the tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGrads {
    pub phi: Matrix,
    pub tokens: Matrix,
}

fn check_tokens(tokens: &Matrix, param_dim: usize) -> Result<(), CompressionError> {
    if tokens.rows() == 0 {
        return Err(CompressionError::EmptyTokens);
    }
    if tokens.cols() != param_dim {
        return Err(CompressionError::DimMismatch { tokens: tokens.cols(), params: param_dim });
    }
    Ok(())
}

/// s_k = Σ_i softmax_i(Φ_k · z_i) · z_i — every slot is a convex mixture of
/// the input tokens, weighted by how strongly its dispatcher row scores each.
pub fn slot_compress(
    tokens: &Matrix,
    disp: &SlotDispatcher,
) -> Result<CompressorOutput, CompressionError> {
    check_tokens(tokens, disp.dim())?;
    let logits = disp.phi.matmul(&tokens.transpose()).expect("dims checked");
    let mut weights = Matrix::zeros(disp.slots(), tokens.rows());
    for k in 0..disp.slots() {
        let row = softmax(logits.row(k)).expect("at least one token");
        weights.row_mut(k).copy_from_slice(&row);
    }
    let slots = weights.matmul(tokens).expect("dims checked");
    Ok(CompressorOutput { slots, dispatch_weights: weights })
}

/// Backward of a row softmax: d_logits = a ⊙ (d_att − (d_att · a)).
fn softmax_row_backward(att: &[f64], d_att: &[f64], d_logits: &mut [f64]) {
    let dot: f64 = d_att.iter().zip(att).map(|(g, a)| g * a).sum();
    for i in 0..att.len() {
        d_logits[i] = att[i] * (d_att[i] - dot);
    }
}

/// Analytic gradients of [`slot_compress`] under an upstream K×d gradient on
/// the slots.
pub fn slot_compress_grad(
    tokens: &Matrix,
    disp: &SlotDispatcher,
    upstream: &Matrix,
) -> Result<SlotGrads, CompressionError> {
    check_tokens(tokens, disp.dim())?;
    if upstream.rows() != disp.slots() || upstream.cols() != disp.dim() {
        return Err(CompressionError::UpstreamShape {
            gr: upstream.rows(),
            gc: upstream.cols(),
            er: disp.slots(),
            ec: disp.dim(),
        });
    }
    let out = slot_compress(tokens, disp)?;
    let weights = &out.dispatch_weights;

    // d_weights = upstream · tokensᵀ, then softmax backward row by row
    let d_weights = upstream.matmul(&tokens.transpose()).expect("dims checked");
    let mut d_logits = Matrix::zeros(disp.slots(), tokens.rows());
    for k in 0..disp.slots() {
        let mut row = vec![0.0; tokens.rows()];
        softmax_row_backward(weights.row(k), d_weights.row(k), &mut row);
        d_logits.row_mut(k).copy_from_slice(&row);
    }

    // logits = Φ Zᵀ, so dΦ = d_logits · Z and dZ gets d_logitsᵀ · Φ;
    // the mixture S = A Z adds Aᵀ · upstream to dZ
    let d_phi = d_logits.matmul(tokens).expect("dims checked");
    let d_tokens = weights
        .transpose()
        .matmul(upstream)
        .expect("dims checked")
        .add(&d_logits.transpose().matmul(&disp.phi).expect("dims checked"))
        .expect("same shape");
    Ok(SlotGrads { phi: d_phi, tokens: d_tokens })
}

/// Tokens that survive a selection compressor, in original input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub indices: Vec<usize>,
    pub values: Matrix,
}

fn gather(tokens: &Matrix, indices: &[usize]) -> Matrix {
    let rows: Vec<Vec<f64>> = indices.iter().map(|&i| tokens.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("selected rows share the token width")
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Keeps the K tokens with the largest distance to their k_nn-th nearest
/// neighbor — the per-sample novelty term of a k-NN entropy estimate. Ties
/// keep the lower index; survivors stay in original order. `k_nn` is clamped
/// to N−1 when fewer neighbors exist.
pub fn entropy_sample(
    tokens: &Matrix,
    k: usize,
    k_nn: usize,
) -> Result<Selected, CompressionError> {
    let n = tokens.rows();
    if n < k {
        return Err(CompressionError::TooFewTokens { n, k });
    }
    if k_nn == 0 {
        return Err(CompressionError::BadNeighborCount);
    }
    if n == k {
        let indices: Vec<usize> = (0..n).collect();
        let values = gather(tokens, &indices);
        return Ok(Selected { indices, values });
    }
    let k_nn = k_nn.min(n - 1);
    let mut scored: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let mut dists: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(tokens.row(i), tokens.row(j)).sqrt())
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            (i, dists[k_nn - 1])
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then(a.0.cmp(&b.0)));
    let mut indices: Vec<usize> = scored.iter().take(k).map(|&(i, _)| i).collect();
    indices.sort_unstable();
    let values = gather(tokens, &indices);
    Ok(Selected { indices, values })
}

/// Farthest-point selection: start with the token farthest from the
/// centroid, then repeatedly add the token maximizing its minimum distance
/// to the chosen set. Deterministic; ties keep the lower index; survivors
/// stay in original order.
pub fn diverse_sample(tokens: &Matrix, k: usize) -> Result<Selected, CompressionError> {
    let n = tokens.rows();
    if n < k {
        return Err(CompressionError::TooFewTokens { n, k });
    }
    if k == 0 {
        return Ok(Selected { indices: vec![], values: Matrix::zeros(0, tokens.cols()) });
    }
    let d = tokens.cols();
    let mut centroid = vec![0.0; d];
    for i in 0..n {
        for (c, v) in centroid.iter_mut().zip(tokens.row(i)) {
            *c += v / n as f64;
        }
    }
    let first = (0..n)
        .map(|i| (i, sq_dist(tokens.row(i), &centroid)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite").then(b.0.cmp(&a.0)))
        .expect("n >= k >= 1")
        .0;

    let mut chosen = vec![first];
    // min squared distance from each token to the chosen set so far
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(tokens.row(i), tokens.row(first))).collect();
    while chosen.len() < k {
        let next = (0..n)
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| min_d[a].partial_cmp(&min_d[b]).expect("finite").then(b.cmp(&a)))
            .expect("fewer chosen than tokens");
        chosen.push(next);
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(tokens.row(i), tokens.row(next)));
        }
    }
    chosen.sort_unstable();
    let values = gather(tokens, &chosen);
    Ok(Selected { indices: chosen, values })
}

/// Stochastic variant: k-means++-style D² seeding. The first pick is
/// uniform; each later pick is drawn with probability proportional to its
/// squared distance from the chosen set. Survivors stay in original order.
pub fn diverse_sample_seeded(
    tokens: &Matrix,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Selected, CompressionError> {
    let n = tokens.rows();
    if n < k {
        return Err(CompressionError::TooFewTokens { n, k });
    }
    if k == 0 {
        return Ok(Selected { indices: vec![], values: Matrix::zeros(0, tokens.cols()) });
    }
    let first = rng.gen_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n).map(|i| sq_dist(tokens.row(i), tokens.row(first))).collect();
    while chosen.len() < k {
        let total: f64 = (0..n).filter(|i| !chosen.contains(i)).map(|i| min_d[i]).sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for i in (0..n).filter(|i| !chosen.contains(i)) {
                target -= min_d[i];
                if target <= 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // duplicates of chosen tokens carry zero mass; fall back to the
            // first unchosen index if rounding exhausts the scan
            pick.unwrap_or_else(|| (0..n).find(|i| !chosen.contains(i)).expect("k <= n"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for i in 0..n {
            min_d[i] = min_d[i].min(sq_dist(tokens.row(i), tokens.row(next)));
        }
    }
    chosen.sort_unstable();
    let values = gather(tokens, &chosen);
    Ok(Selected { indices: chosen, values })
}

/// Single-head cross-attention compressor: K trainable queries attend over
/// key-projected tokens and mix value-projected tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossAttention {
    pub queries: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

/// Gradients of a cross-attention compression for every parameter and the
/// tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionGrads {
    pub queries: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub tokens: Matrix,
}

impl CrossAttention {
    pub fn new(queries: Matrix, w_k: Matrix, w_v: Matrix) -> Result<Self, CompressionError> {
        let d = queries.cols();
        for m in [&w_k, &w_v] {
            if m.rows() != d || m.cols() != d {
                return Err(CompressionError::DimMismatch { tokens: m.rows(), params: d });
            }
        }
        if queries.rows() == 0 {
            return Err(CompressionError::NoSlots);
        }
        Ok(CrossAttention { queries, w_k, w_v })
    }

    pub fn random(k: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        CrossAttention {
            queries: Matrix::random(k, d, scale, rng),
            w_k: Matrix::random(d, d, scale, rng),
            w_v: Matrix::random(d, d, scale, rng),
        }
    }

    pub fn out_rows(&self) -> usize {
        self.queries.rows()
    }

    pub fn dim(&self) -> usize {
        self.queries.cols()
    }

    /// softmax(Q·Kᵀ/√d)·V with K = tokens·W_k and V = tokens·W_v.
    pub fn compress(&self, tokens: &Matrix) -> Result<CompressorOutput, CompressionError> {
        check_tokens(tokens, self.dim())?;
        let keys = tokens.matmul(&self.w_k).expect("dims checked");
        let values = tokens.matmul(&self.w_v).expect("dims checked");
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let logits =
            self.queries.matmul(&keys.transpose()).expect("dims checked").scale(scale);
        let mut att = Matrix::zeros(self.out_rows(), tokens.rows());
        for k in 0..self.out_rows() {
            let row = softmax(logits.row(k)).expect("at least one token");
            att.row_mut(k).copy_from_slice(&row);
        }
        let slots = att.matmul(&values).expect("dims checked");
        Ok(CompressorOutput { slots, dispatch_weights: att })
    }

    /// Analytic gradients under an upstream K×d gradient on the outputs.
    pub fn grad(
        &self,
        tokens: &Matrix,
        upstream: &Matrix,
    ) -> Result<CrossAttentionGrads, CompressionError> {
        check_tokens(tokens, self.dim())?;
        if upstream.rows() != self.out_rows() || upstream.cols() != self.dim() {
            return Err(CompressionError::UpstreamShape {
                gr: upstream.rows(),
                gc: upstream.cols(),
                er: self.out_rows(),
                ec: self.dim(),
            });
        }
        let keys = tokens.matmul(&self.w_k).expect("dims checked");
        let values = tokens.matmul(&self.w_v).expect("dims checked");
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let logits =
            self.queries.matmul(&keys.transpose()).expect("dims checked").scale(scale);
        let mut att = Matrix::zeros(self.out_rows(), tokens.rows());
        for k in 0..self.out_rows() {
            let row = softmax(logits.row(k)).expect("at least one token");
            att.row_mut(k).copy_from_slice(&row);
        }

        // slots = att · values
        let d_att = upstream.matmul(&values.transpose()).expect("dims checked");
        let d_values = att.transpose().matmul(upstream).expect("dims checked");
        let mut d_logits = Matrix::zeros(self.out_rows(), tokens.rows());
        for k in 0..self.out_rows() {
            let mut row = vec![0.0; tokens.rows()];
            softmax_row_backward(att.row(k), d_att.row(k), &mut row);
            d_logits.row_mut(k).copy_from_slice(&row);
        }
        // logits = Q·keysᵀ·scale
        let d_queries = d_logits.matmul(&keys).expect("dims checked").scale(scale);
        let d_keys = d_logits.transpose().matmul(&self.queries).expect("dims checked").scale(scale);
        // keys = tokens·W_k, values = tokens·W_v
        let d_w_k = tokens.transpose().matmul(&d_keys).expect("dims checked");
        let d_w_v = tokens.transpose().matmul(&d_values).expect("dims checked");
        let d_tokens = d_keys
            .matmul(&self.w_k.transpose())
            .expect("dims checked")
            .add(&d_values.matmul(&self.w_v.transpose()).expect("dims checked"))
            .expect("same shape");
        Ok(CrossAttentionGrads {
            queries: d_queries,
            w_k: d_w_k,
            w_v: d_w_v,
            tokens: d_tokens,
        })
    }
}

//! `vtg compress-bench` — runs the four token compressors over one random
//! token grid, times each, and certifies the geometry of the outputs:
//! mixture methods must stay inside the bounding box of what they mix
//! (with weights that are a true convex combination), selection methods
//! must return exact input rows.

use std::time::Instant;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vtg_core::token_compression::{
    diverse_sample, entropy_sample, slot_compress, Selected, SlotDispatcher,
};
use vtg_core::{CrossAttention, Matrix};

use crate::report::{write_report, CliError};

use super::{sub_seed, Ctx};

/// Neighbor rank used by the entropy scorer.
const ENTROPY_K_NN: usize = 3;

/// Dispatch-weight rows must sum to one within this.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Dispatch weights may undershoot zero by at most this.
const WEIGHT_NEG_TOL: f64 = 1e-12;

/// Output coordinates may leave the bounding box by at most this.
const BOX_TOL: f64 = 1e-9;

#[derive(Debug, Args)]
pub struct CompressBenchArgs {
    /// Frame count of the token grid.
    #[arg(long)]
    pub n: Option<usize>,

    /// Tokens per frame.
    #[arg(long)]
    pub m: Option<usize>,

    /// Token width.
    #[arg(long)]
    pub d: Option<usize>,

    /// Outputs per compressor.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Serialize)]
struct MethodReport {
    name: &'static str,
    outputs: usize,
    wall_ms: f64,
    convex_pass_rate: f64,
}

#[derive(Debug, Serialize)]
struct CompressBenchReport {
    seed: u64,
    n: usize,
    m: usize,
    d: usize,
    k: usize,
    tokens: usize,
    methods: Vec<MethodReport>,
}

/// Per-column bounding box of a matrix.
fn column_box(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; x.cols()];
    let mut hi = vec![f64::NEG_INFINITY; x.cols()];
    for r in 0..x.rows() {
        for (c, &v) in x.row(r).iter().enumerate() {
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    (lo, hi)
}

/// Fraction of output rows that are certified convex mixtures of `hull_src`
/// rows: their dispatch weights sum to one and are non-negative, and every
/// coordinate stays inside the per-column bounding box of `hull_src`.
fn convex_pass_rate(slots: &Matrix, weights: &Matrix, hull_src: &Matrix) -> f64 {
    let (lo, hi) = column_box(hull_src);
    let mut passed = 0usize;
    for k in 0..slots.rows() {
        let w = weights.row(k);
        let sum: f64 = w.iter().sum();
        let weights_ok =
            (sum - 1.0).abs() <= WEIGHT_SUM_TOL && w.iter().all(|&v| v >= -WEIGHT_NEG_TOL);
        let box_ok = slots
            .row(k)
            .iter()
            .enumerate()
            .all(|(c, &v)| v >= lo[c] - BOX_TOL && v <= hi[c] + BOX_TOL);
        passed += (weights_ok && box_ok) as usize;
    }
    passed as f64 / slots.rows() as f64
}

/// Fraction of selected rows that are bitwise copies of the input row they
/// claim to be.
fn membership_pass_rate(selected: &Selected, tokens: &Matrix) -> f64 {
    let mut passed = 0usize;
    for (out_row, &src) in selected.indices.iter().enumerate() {
        passed += (selected.values.row(out_row) == tokens.row(src)) as usize;
    }
    passed as f64 / selected.indices.len().max(1) as f64
}

pub fn run(ctx: &Ctx, args: CompressBenchArgs) -> Result<(), CliError> {
    let n = args.n.unwrap_or(96);
    let m = args.m.unwrap_or(32);
    let d = args.d.unwrap_or(32);
    let k = args.k.unwrap_or(256);
    if n * m == 0 || d == 0 || k == 0 {
        return Err(CliError::Validation(format!(
            "n*m, d, and k must all be positive (got n={n}, m={m}, d={d}, k={k})"
        )));
    }
    if k > n * m {
        return Err(CliError::Validation(format!(
            "selection methods cannot pick k={k} of {} tokens",
            n * m
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, 0xCB));
    let tokens = Matrix::random(n * m, d, 1.0, &mut rng);
    let mut methods = Vec::with_capacity(4);

    let disp = SlotDispatcher::random(k, d, 0.2, &mut rng);
    let start = Instant::now();
    let out = slot_compress(&tokens, &disp)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    methods.push(MethodReport {
        name: "slot",
        outputs: out.slots.rows(),
        wall_ms,
        convex_pass_rate: convex_pass_rate(&out.slots, &out.dispatch_weights, &tokens),
    });

    let start = Instant::now();
    let selected = entropy_sample(&tokens, k, ENTROPY_K_NN)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    methods.push(MethodReport {
        name: "entropy",
        outputs: selected.values.rows(),
        wall_ms,
        convex_pass_rate: membership_pass_rate(&selected, &tokens),
    });

    let start = Instant::now();
    let selected = diverse_sample(&tokens, k)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    methods.push(MethodReport {
        name: "diverse",
        outputs: selected.values.rows(),
        wall_ms,
        convex_pass_rate: membership_pass_rate(&selected, &tokens),
    });

    let ca = CrossAttention::random(k, d, 1.0 / (d as f64).sqrt(), &mut rng);
    let start = Instant::now();
    let out = ca.compress(&tokens)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    // Cross-attention mixes value-projected tokens, so its outputs live in
    // the bounding box of tokens · W_v, not of the raw tokens.
    let values = tokens.matmul(&ca.w_v).map_err(|e| CliError::Internal(e.to_string()))?;
    methods.push(MethodReport {
        name: "xattn",
        outputs: out.slots.rows(),
        wall_ms,
        convex_pass_rate: convex_pass_rate(&out.slots, &out.dispatch_weights, &values),
    });

    let report = CompressBenchReport { seed: ctx.seed, n, m, d, k, tokens: n * m, methods };
    let path = write_report(&ctx.out_dir, "compress_bench", &report)?;

    for mr in &report.methods {
        println!(
            "{:8} outputs {:5}  wall {:10.3} ms  convex pass rate {:.3}",
            mr.name, mr.outputs, mr.wall_ms, mr.convex_pass_rate
        );
    }
    println!("report: {}", path.display());

    for mr in &report.methods {
        if mr.outputs != k {
            return Err(CliError::Internal(format!(
                "{} emitted {} outputs for k={k}",
                mr.name, mr.outputs
            )));
        }
        if mr.convex_pass_rate < 1.0 {
            return Err(CliError::Internal(format!(
                "{} convex pass rate {} below 1.0",
                mr.name, mr.convex_pass_rate
            )));
        }
    }
    Ok(())
}

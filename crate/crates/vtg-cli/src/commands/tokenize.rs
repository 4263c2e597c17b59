//! `vtg tokenize --t 120.5` — shows how one timestamp renders as time
//! tokens: the rounded value, the fixed-width digit string, the token
//! surfaces, and the vocabulary ids.

use clap::Args;
use serde::Serialize;

use vtg_core::time_tokenizer::{decode_timestamp, encode_timestamp, round_to_tenths};
use vtg_core::TextCodec;

use crate::report::{write_report, CliError};

use super::Ctx;

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// Timestamp in seconds (0.0 ..= 9999.9 after rounding to tenths).
    #[arg(long)]
    pub t: f64,
}

#[derive(Debug, Serialize)]
struct TokenizeReport {
    t: f64,
    rounded: f64,
    digits: String,
    surface: String,
    ids: Vec<u32>,
    decoded: f64,
}

pub fn run(ctx: &Ctx, args: TokenizeArgs) -> Result<(), CliError> {
    let codec = TextCodec::standard();
    let vocab = codec.time_vocab();
    let seq = encode_timestamp(args.t, &vocab)?;
    let report = TokenizeReport {
        t: args.t,
        rounded: round_to_tenths(args.t),
        digits: seq.digits(&vocab),
        surface: seq.surface(&vocab),
        ids: seq.ids().to_vec(),
        decoded: decode_timestamp(&seq, &vocab),
    };
    let path = write_report(&ctx.out_dir, "tokenize", &report)?;
    println!("t = {} -> {} (digits {})", report.t, report.surface, report.digits);
    println!("ids: {:?}", report.ids);
    println!("report: {}", path.display());
    Ok(())
}

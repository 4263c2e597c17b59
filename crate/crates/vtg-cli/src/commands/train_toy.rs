//! `vtg train-toy` — trains the small grounding model on a synthetic
//! dataset with plain SGD, then saves a checkpoint, a per-step loss curve,
//! and a summary report.

use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use vtg_core::grounding_model::{GroundingModel, ModelConfig, TrainExample};
use vtg_core::vtg_data::{load_jsonl, SynthSample};

use crate::report::{write_report, CliError};

use super::{sub_seed, Ctx};

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// JSONL of synthetic samples to train on.
    #[arg(long)]
    pub data: PathBuf,

    /// SGD steps (one example per step).
    #[arg(long)]
    pub steps: Option<usize>,

    /// SGD learning rate.
    #[arg(long)]
    pub lr: Option<f64>,

    /// Checkpoint file name inside the output directory.
    #[arg(long, default_value = "model.json")]
    pub checkpoint_name: String,

    /// Loss-curve file name inside the output directory.
    #[arg(long, default_value = "losses.csv")]
    pub losses_name: String,
}

#[derive(Debug, Serialize)]
struct TrainToyReport {
    seed: u64,
    steps: usize,
    learning_rate: f64,
    examples: usize,
    first_loss: Option<f64>,
    last_loss: Option<f64>,
    checkpoint: String,
    losses: String,
    model: ModelConfig,
}

pub fn run(ctx: &Ctx, args: TrainToyArgs) -> Result<(), CliError> {
    let steps = args.steps.or(ctx.config.training.steps).unwrap_or(3000);
    let lr = args.lr.or(ctx.config.training.learning_rate).unwrap_or(0.25);
    if !(lr.is_finite() && lr > 0.0) {
        return Err(CliError::Validation(format!("learning rate must be positive, got {lr}")));
    }
    let cfg = ctx.config.model.resolve();

    let samples: Vec<SynthSample> = load_jsonl(&args.data)?;
    let mut model = GroundingModel::new(cfg.clone(), sub_seed(ctx.seed, 1))?;

    let mut prep_rng = ChaCha8Rng::seed_from_u64(sub_seed(ctx.seed, 2));
    let examples: Vec<TrainExample> = samples
        .iter()
        .map(|s| model.prepare_example(s, &mut prep_rng))
        .collect::<Result<_, _>>()?;

    let train_report = model.train(&examples, steps, lr, sub_seed(ctx.seed, 3))?;

    std::fs::create_dir_all(&ctx.out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", ctx.out_dir.display())))?;
    let checkpoint_path = ctx.out_dir.join(&args.checkpoint_name);
    model.save(&checkpoint_path)?;

    let losses_path = ctx.out_dir.join(&args.losses_name);
    let mut csv = String::from("step,loss\n");
    for (step, loss) in train_report.losses.iter().enumerate() {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    std::fs::write(&losses_path, csv)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", losses_path.display())))?;

    let report = TrainToyReport {
        seed: ctx.seed,
        steps,
        learning_rate: lr,
        examples: examples.len(),
        first_loss: train_report.losses.first().copied(),
        last_loss: train_report.losses.last().copied(),
        checkpoint: args.checkpoint_name.clone(),
        losses: args.losses_name.clone(),
        model: cfg,
    };
    let path = write_report(&ctx.out_dir, "train_toy", &report)?;
    match (report.first_loss, report.last_loss) {
        (Some(first), Some(last)) => println!(
            "trained {} steps on {} examples: loss {:.4} -> {:.4}",
            steps,
            examples.len(),
            first,
            last
        ),
        _ => println!("trained 0 steps on {} examples", examples.len()),
    }
    println!("checkpoint: {}", checkpoint_path.display());
    println!("report: {}", path.display());
    Ok(())
}

//! Run configuration: a JSON file with nested sections, merged under
//! explicit flags (flags win), with `VTG_SEED` as the seed fallback.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vtg_core::grounding_model::ModelConfig;
use vtg_core::vtg_data::SynthSpec;

use crate::report::CliError;

/// Top-level configuration. Unknown keys anywhere are rejected so typos
/// fail loudly instead of silently using defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub data: DataSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub frames: Option<usize>,
    pub tokens_per_frame: Option<usize>,
    pub dim: Option<usize>,
    pub slots: Option<usize>,
    pub feature_dim: Option<usize>,
    pub time_rows: Option<usize>,
    pub max_seq_len: Option<usize>,
    pub temperature: Option<f64>,
    pub use_time_tokens: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub total: Option<usize>,
    pub mr: Option<usize>,
    pub dvc: Option<usize>,
    pub vs: Option<usize>,
    pub vhd: Option<usize>,
    pub duration_min: Option<f64>,
    pub duration_max: Option<f64>,
    pub feature_dim: Option<usize>,
    pub max_events: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub steps: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub temperature: Option<f64>,
    pub max_new_tokens: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&body)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads the config named by the flag, or an empty default.
    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(RunConfig::default()),
        }
    }
}

/// The model geometry the CLI trains by default: 16 frames x 2 tokens
/// compressed to 16 slots at width 32 — small enough to train in seconds,
/// fine enough along the time axis to ground 5-second-grid events.
pub fn default_cli_model() -> ModelConfig {
    ModelConfig {
        frames: 16,
        tokens_per_frame: 2,
        dim: 32,
        slots: 16,
        feature_dim: 12,
        time_rows: 256,
        max_seq_len: 160,
        temperature: 1.0,
        use_time_tokens: true,
    }
}

impl ModelSection {
    /// Default CLI geometry overridden by whatever this section sets.
    pub fn resolve(&self) -> ModelConfig {
        let mut cfg = default_cli_model();
        if let Some(v) = self.frames {
            cfg.frames = v;
        }
        if let Some(v) = self.tokens_per_frame {
            cfg.tokens_per_frame = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.slots {
            cfg.slots = v;
        }
        if let Some(v) = self.feature_dim {
            cfg.feature_dim = v;
        }
        if let Some(v) = self.time_rows {
            cfg.time_rows = v;
        }
        if let Some(v) = self.max_seq_len {
            cfg.max_seq_len = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.use_time_tokens {
            cfg.use_time_tokens = v;
        }
        cfg
    }
}

impl DataSection {
    /// Builds the generation spec: per-task counts win over `total` (which
    /// splits by the standard task mix), defaults fill the rest.
    pub fn resolve(&self) -> Result<SynthSpec, CliError> {
        let duration_min = self.duration_min.unwrap_or(60.0);
        let duration_max = self.duration_max.unwrap_or(120.0);
        if !(duration_min > 0.0 && duration_max >= duration_min) {
            return Err(CliError::Validation(format!(
                "bad duration range [{duration_min}, {duration_max}]"
            )));
        }
        let feature_dim = self.feature_dim.unwrap_or(12);
        let mut spec = SynthSpec::from_total(
            self.total.unwrap_or(100),
            (duration_min, duration_max),
            feature_dim,
        );
        if self.mr.is_some() || self.dvc.is_some() || self.vs.is_some() || self.vhd.is_some() {
            // Explicit counts replace the mix entirely: unset tasks mean zero.
            spec.mr = self.mr.unwrap_or(0);
            spec.dvc = self.dvc.unwrap_or(0);
            spec.vs = self.vs.unwrap_or(0);
            spec.vhd = self.vhd.unwrap_or(0);
        }
        if let Some(v) = self.max_events {
            spec.max_events = v;
        }
        if spec.total() == 0 {
            return Err(CliError::Validation(
                "dataset would be empty: all task counts are zero".into(),
            ));
        }
        Ok(spec)
    }
}

/// Seed precedence: explicit flag, then config file, then `VTG_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config {
        return Ok(s);
    }
    match std::env::var("VTG_SEED") {
        Ok(raw) => raw.trim().parse::<u64>().map_err(|_| {
            CliError::Validation(format!("VTG_SEED must be an unsigned integer, got {raw:?}"))
        }),
        Err(_) => Ok(0),
    }
}

/// Output-directory precedence: flag, then config, then `./vtg-out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config).unwrap_or_else(|| PathBuf::from("vtg-out"))
}

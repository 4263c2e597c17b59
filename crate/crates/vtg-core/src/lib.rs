//! Timestamp-aware video grounding toolkit: absolute-time tokens, trainable
//! sequence-time embeddings, slot-based token compression, the metrics that
//! score grounding output, and a small end-to-end trainable pipeline for
//! exercising all of it on synthetic data.

pub mod grounding_model;
pub mod numerics;
pub mod ste_embedding;
pub mod time_tokenizer;
pub mod token_compression;
pub mod vtg_data;
pub mod vtg_metrics;

pub use grounding_model::{GroundingModel, ModelConfig, TextCodec};
pub use numerics::Matrix;
pub use ste_embedding::{SteMode, SteTable, TokenGrid};
pub use time_tokenizer::{TimeTokenSeq, TimeVocab};
pub use token_compression::{CompressorOutput, CrossAttention, SlotDispatcher};
pub use vtg_data::{Phase, SyntheticVideo, VtgAnnotation};
pub use vtg_metrics::{HighlightFrame, Segment, TaskKind};

//! The shared sentence-encoder tower.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;

pub use checkpoint::{Checkpoint, RunMetadata, FORMAT_VERSION};
pub use config::{EncoderConfig, Pooling, PositionalKind};
pub use forward::{embed_batch, embed_sentence, embed_texts, encode_tokens, forward, pool, pool_mean, Batch, Encoded, EncoderVars};
pub use params::{EncoderParams, LayerSlot};

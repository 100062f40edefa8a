use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Precision;
use crate::textproc::DEFAULT_MAX_LEN;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalKind {
    #[default]
    Learned,
}

/// How token states become one sentence vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Mean over non-pad positions.
    #[default]
    Mean,
    /// The `[CLS]` position's state.
    Cls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub positional: PositionalKind,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub precision: Precision,
}

fn default_dropout() -> f64 {
    0.1
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, width 32, 4 heads, feed-forward 64.
    pub fn desk(vocab_size: usize) -> Self {
        EncoderConfig {
            num_layers: 2,
            hidden: 32,
            heads: 4,
            ff: 64,
            max_len: DEFAULT_MAX_LEN,
            vocab_size,
            dropout: default_dropout(),
            positional: PositionalKind::Learned,
            pooling: Pooling::Mean,
            precision: Precision::F64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ff", self.ff),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.max_len < 3 {
            return Err(Error::Config(format!("max_len must be at least 3, got {}", self.max_len)));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Number of scalar parameters implied by this configuration.
    pub fn param_count(&self) -> usize {
        let (v, d, f, l) = (self.vocab_size, self.hidden, self.ff, self.num_layers);
        let per_layer = 4 * d * d + 2 * d + d * f + f + f * d + d + 2 * d;
        v * d + self.max_len * d + l * per_layer + v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults_validate() {
        let c = EncoderConfig::desk(100);
        assert_eq!((c.num_layers, c.hidden, c.heads, c.ff, c.max_len), (2, 32, 4, 64, 64));
        c.validate().unwrap();
    }

    #[test]
    fn heads_must_divide_hidden() {
        let mut c = EncoderConfig::desk(100);
        c.heads = 5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.heads = 0;
        assert!(c.validate().is_err());
    }
}

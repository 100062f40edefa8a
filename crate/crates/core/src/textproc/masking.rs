use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tokenize::TokenSeq;
use super::vocab::{MASK, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::numcore::StreamRng;

pub const DEFAULT_MASK_RATE: f64 = 0.15;

/// What a selected position is replaced with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScheme {
    /// Every selected position becomes `[MASK]`.
    #[default]
    AllMask,
    /// 80% `[MASK]`, 10% a random non-special token, 10% unchanged.
    Bert801010,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub rate: f64,
    pub scheme: MaskScheme,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            rate: DEFAULT_MASK_RATE,
            scheme: MaskScheme::AllMask,
        }
    }
}

/// A batch after masking, with the positions to predict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub inputs: Vec<TokenSeq>,
    /// `(sequence index, position)` of each prediction target.
    pub positions: Vec<(usize, usize)>,
    /// Pre-mask ids at `positions`.
    pub targets: Vec<usize>,
    /// Sequences that had no maskable position.
    pub skipped: usize,
}

fn eligible(seq: &TokenSeq) -> Vec<usize> {
    (0..seq.ids.len())
        .filter(|&p| seq.attention_mask[p] == 1 && seq.ids[p] >= NUM_SPECIALS)
        .collect()
}

/// Masks with the default all-`[MASK]` scheme.
pub fn apply_mlm_mask(batch: &[TokenSeq], rate: f64, rng: &mut StreamRng) -> Result<MaskedBatch> {
    apply_mlm_mask_with(batch, MaskConfig { rate, scheme: MaskScheme::AllMask }, 0, rng)
}

/// Selects each non-special, non-pad position independently with
/// probability `config.rate`. A sequence with no selection gets one
/// position forced uniformly at random. `vocab_size` is only consulted by
/// [`MaskScheme::Bert801010`].
pub fn apply_mlm_mask_with(
    batch: &[TokenSeq],
    config: MaskConfig,
    vocab_size: usize,
    rng: &mut StreamRng,
) -> Result<MaskedBatch> {
    if !(config.rate > 0.0 && config.rate < 1.0) {
        return Err(Error::Contract(format!("mask rate {} outside (0, 1)", config.rate)));
    }
    if config.scheme == MaskScheme::Bert801010 && vocab_size <= NUM_SPECIALS {
        return Err(Error::Contract("random replacement needs non-special tokens".into()));
    }
    let mut out = MaskedBatch {
        inputs: batch.to_vec(),
        positions: Vec::new(),
        targets: Vec::new(),
        skipped: 0,
    };
    for (si, seq) in batch.iter().enumerate() {
        let cand = eligible(seq);
        if cand.is_empty() {
            out.skipped += 1;
            continue;
        }
        let mut chosen: Vec<usize> = cand
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < config.rate)
            .collect();
        if chosen.is_empty() {
            chosen.push(cand[rng.random_range(0..cand.len())]);
        }
        for p in chosen {
            let original = seq.ids[p];
            let replacement = match config.scheme {
                MaskScheme::AllMask => MASK,
                MaskScheme::Bert801010 => {
                    let r: f64 = rng.random();
                    if r < 0.8 {
                        MASK
                    } else if r < 0.9 {
                        rng.random_range(NUM_SPECIALS..vocab_size)
                    } else {
                        original
                    }
                }
            };
            out.inputs[si].ids[p] = replacement;
            out.positions.push((si, p));
            out.targets.push(original);
        }
    }
    if out.skipped > 0 {
        log::warn!("{} sequence(s) had no maskable tokens", out.skipped);
    }
    Ok(out)
}

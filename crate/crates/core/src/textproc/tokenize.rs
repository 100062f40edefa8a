use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, CLS, PAD, SEP, UNK};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 64;

/// Lowercases and splits on whitespace and punctuation. Punctuation acts
/// as a separator and is dropped, so tokens are runs of alphanumerics.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// An encoded sentence: `[CLS] tokens… [SEP]` followed by `[PAD]`s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    /// Number of non-pad positions, specials included.
    pub len: usize,
}

impl TokenSeq {
    pub fn padded_len(&self) -> usize {
        self.ids.len()
    }
}

/// Encodes `text` to exactly `max_len` positions. Content beyond
/// `max_len - 2` tokens is cut so `[SEP]` always fits.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> Result<TokenSeq> {
    if max_len < 3 {
        return Err(Error::Contract(format!("max_len must be at least 3, got {max_len}")));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(
        tokenize(text)
            .iter()
            .take(max_len - 2)
            .map(|t| vocab.id(t).unwrap_or(UNK)),
    );
    ids.push(SEP);
    let len = ids.len();
    ids.resize(max_len, PAD);
    let mut attention_mask = vec![1; len];
    attention_mask.resize(max_len, 0);
    Ok(TokenSeq {
        ids,
        attention_mask,
        len,
    })
}

/// Tokens for the non-pad, non-[CLS]/[SEP] positions of `seq`.
pub fn decode<'v>(seq: &TokenSeq, vocab: &'v Vocab) -> Vec<&'v str> {
    seq.ids[..seq.len]
        .iter()
        .filter(|&&id| id != CLS && id != SEP)
        .filter_map(|&id| vocab.token(id))
        .collect()
}

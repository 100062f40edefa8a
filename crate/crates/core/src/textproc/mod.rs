//! Vocabulary, sentence encoding, and masked-LM corruption.

pub mod masking;
pub mod tokenize;
pub mod vocab;

pub use masking::{apply_mlm_mask, apply_mlm_mask_with, MaskConfig, MaskScheme, MaskedBatch};
pub use tokenize::{decode, encode, tokenize, TokenSeq, DEFAULT_MAX_LEN};
pub use vocab::{Vocab, CLS, MASK, NUM_SPECIALS, PAD, SEP, SPECIAL_TOKENS, UNK};

use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Bijective token/id mapping. Ids `0..5` are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from raw sentences.
    ///
    /// Tokens seen at least `min_freq` times are kept, most frequent first
    /// with ties broken lexicographically, and truncated so the total size
    /// including specials does not exceed `max_size`.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_freq: usize, max_size: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
        }
        if max_size < NUM_SPECIALS {
            return Err(Error::Input(format!(
                "max_size {max_size} cannot hold the {NUM_SPECIALS} special tokens"
            )));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for sentence in corpus {
            for tok in tokenize(sentence.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Wraps an id-ordered token list, checking specials and uniqueness.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < NUM_SPECIALS || tokens[..NUM_SPECIALS] != SPECIAL_TOKENS {
            return Err(Error::Input(format!(
                "vocabulary must start with {SPECIAL_TOKENS:?}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {tok:?} at id {id}")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Input(format!("duplicate token {tok:?} at id {id}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// File form: one token per line, line number equals id, LF-terminated.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let tokens = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Hex SHA-256 of the vocabulary's file form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `ARGSIMCK`, a little-endian `u64` header
//! length, the JSON header, then every tensor's values as little-endian
//! IEEE-754 `f64` in manifest order. Offsets in the manifest are relative
//! to the start of the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EncoderConfig;
use super::params::EncoderParams;
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};
use crate::textproc::Vocab;

pub const MAGIC: &[u8; 8] = b"ARGSIMCK";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance carried by every written artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// The curriculum that produced the artifact, as stage records.
    pub plan: serde_json::Value,
}

impl RunMetadata {
    pub fn new(config_hash: impl Into<String>, seed: u64, plan: serde_json::Value) -> Self {
        RunMetadata {
            format_version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            seed,
            plan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: EncoderConfig,
    vocab_hash: String,
    vocab: Vec<String>,
    metadata: RunMetadata,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub vocab: Vocab,
    pub metadata: RunMetadata,
}

impl Checkpoint {
    pub fn new(params: EncoderParams, vocab: Vocab, metadata: RunMetadata) -> Result<Self> {
        if params.config.vocab_size != vocab.len() {
            return Err(Error::Integrity(format!(
                "encoder expects {} tokens, vocabulary has {}",
                params.config.vocab_size,
                vocab.len()
            )));
        }
        Ok(Checkpoint {
            params,
            vocab,
            metadata,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let tensors = self
            .params
            .store
            .iter()
            .map(|(name, t)| {
                let length = (t.len() * 8) as u64;
                let e = TensorEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                    length,
                };
                offset += length;
                e
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.params.config.clone(),
            vocab_hash: self.vocab.hash(),
            vocab: self.vocab.tokens().to_vec(),
            metadata: self.metadata.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.store.tensors() {
            for v in t.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Integrity(format!("corrupt checkpoint: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {}", header.format_version)));
        }
        let vocab = Vocab::from_tokens(header.vocab).map_err(|e| bad(&e.to_string()))?;
        if vocab.hash() != header.vocab_hash {
            return Err(Error::Integrity("embedded vocabulary does not match its hash".into()));
        }
        let payload = &bytes[16 + hlen..];
        let mut store = ParamStore::new();
        let mut expected_offset = 0u64;
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if e.offset != expected_offset || e.length != (n * 8) as u64 {
                return Err(bad(&format!("manifest entry {} is inconsistent", e.name)));
            }
            let raw = payload
                .get(e.offset as usize..(e.offset + e.length) as usize)
                .ok_or_else(|| bad(&format!("payload truncated at {}", e.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            store.push(e.name.clone(), Tensor::new(e.shape.clone(), values)?);
            expected_offset += e.length;
        }
        if expected_offset as usize != payload.len() {
            return Err(bad("trailing bytes after payload"));
        }
        let params = EncoderParams::from_store(&header.config, store)?;
        Checkpoint::new(params, vocab, header.metadata)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{stream, SeedPurpose};

    fn sample() -> Checkpoint {
        let vocab = Vocab::build(&["one two three", "two three"], 1, 50).unwrap();
        let mut cfg = EncoderConfig::desk(vocab.len());
        cfg.max_len = 8;
        let params = EncoderParams::init(&cfg, &mut stream(9, 0, SeedPurpose::Init)).unwrap();
        let meta = RunMetadata::new("abc", 42, serde_json::json!([]));
        Checkpoint::new(params, vocab, meta).unwrap()
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&wrong), Err(Error::Integrity(_))));
    }

    #[test]
    fn vocab_size_must_match_config() {
        let ck = sample();
        let other = Vocab::build(&["just one"], 1, 50).unwrap();
        assert!(Checkpoint::new(ck.params, other, ck.metadata).is_err());
    }
}

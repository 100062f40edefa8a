use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::{Stage, StageName, TrainOptions, DEFAULT_SEED};
use crate::encoder::{EncoderConfig, Pooling};
use crate::error::{Error, Result};
use crate::evalkit::{EvalOptions, DEFAULT_FOLDS};
use crate::io::{read_to_string, sha256_hex};
use crate::numcore::Precision;
use crate::textproc::{MaskConfig, MaskScheme, DEFAULT_MAX_LEN};

/// Encoder dimensions; the vocabulary size comes from the vocab file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub num_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub pooling: Pooling,
    pub precision: Precision,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let d = EncoderConfig::desk(0);
        EncoderSettings {
            num_layers: d.num_layers,
            hidden: d.hidden,
            heads: d.heads,
            ff: d.ff,
            max_len: DEFAULT_MAX_LEN,
            dropout: d.dropout,
            pooling: d.pooling,
            precision: d.precision,
        }
    }
}

impl EncoderSettings {
    pub fn config(&self, vocab_size: usize) -> Result<EncoderConfig> {
        let c = EncoderConfig {
            num_layers: self.num_layers,
            hidden: self.hidden,
            heads: self.heads,
            ff: self.ff,
            max_len: self.max_len,
            vocab_size,
            dropout: self.dropout,
            pooling: self.pooling,
            precision: self.precision,
            ..EncoderConfig::desk(vocab_size)
        };
        c.validate()?;
        Ok(c)
    }
}

/// Settings for the per-fold `STS_tgt` stage when the plan does not carry one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
}

impl FinetuneSettings {
    pub fn stage(&self) -> Stage {
        let d = Stage::new(StageName::StsTgt);
        Stage {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            ..d
        }
    }
}

/// Everything a run needs. Paths are taken as given, relative to the
/// working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub encoder: EncoderSettings,
    pub plan: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub domain_corpus: Option<PathBuf>,
    pub target_pairs: Option<PathBuf>,
    /// Sentences for `MLM_tgt`; defaults to both sides of `target_pairs`.
    pub target_corpus: Option<PathBuf>,
    pub source_pairs: Option<PathBuf>,
    pub nli: Option<PathBuf>,
    /// Sentences for `MLM_src`; defaults to both sides of `nli`.
    pub source_corpus: Option<PathBuf>,
    pub min_freq: usize,
    pub max_vocab: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub folds: usize,
    pub mask_rate: f64,
    pub mask_scheme: MaskScheme,
    pub clip_norm: f64,
    pub finetune: FinetuneSettings,
    /// Run folds and sweep points on the rayon pool.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainOptions::default();
        RunConfig {
            encoder: EncoderSettings::default(),
            plan: None,
            vocab: None,
            domain_corpus: None,
            target_pairs: None,
            target_corpus: None,
            source_pairs: None,
            nli: None,
            source_corpus: None,
            min_freq: 1,
            max_vocab: 30_000,
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("runs"),
            folds: DEFAULT_FOLDS,
            mask_rate: train.mask.rate,
            mask_scheme: train.mask.scheme,
            clip_norm: train.clip_norm,
            finetune: FinetuneSettings::default(),
            parallel: true,
        }
    }
}

impl RunConfig {
    /// Reads a config file. Relative data paths are taken relative to the
    /// file's directory; `output_dir` stays relative to the working directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for field in [
            &mut c.plan,
            &mut c.vocab,
            &mut c.domain_corpus,
            &mut c.target_pairs,
            &mut c.target_corpus,
            &mut c.source_pairs,
            &mut c.nli,
            &mut c.source_corpus,
        ] {
            if let Some(p) = field.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the config with the output directory blanked, so moving
    /// a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.vocab.clone().unwrap_or_else(|| self.output_dir.join("vocab.txt"))
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            mask: MaskConfig {
                rate: self.mask_rate,
                scheme: self.mask_scheme,
            },
            clip_norm: self.clip_norm,
        }
    }

    pub fn eval_options(&self, supervised: bool) -> EvalOptions {
        EvalOptions {
            k: self.folds,
            supervised,
            seed: self.seed,
            train: self.train_options(),
            parallel: self.parallel,
        }
    }

    /// Default dataset for a stage, before any per-stage override.
    pub fn dataset_for(&self, stage: StageName) -> Option<&Path> {
        match stage {
            StageName::MlmDomain => self.domain_corpus.as_deref(),
            StageName::MlmTgt => self.target_corpus.as_deref().or(self.target_pairs.as_deref()),
            StageName::StsSrc => self.source_pairs.as_deref(),
            StageName::StsTgt => self.target_pairs.as_deref(),
            StageName::NliSrc => self.nli.as_deref(),
            StageName::MlmSrc => self.source_corpus.as_deref().or(self.nli.as_deref()),
        }
    }

    /// Which config field feeds a stage, for error messages.
    pub fn field_for(stage: StageName) -> &'static str {
        match stage {
            StageName::MlmDomain => "domain_corpus",
            StageName::MlmTgt => "target_corpus or target_pairs",
            StageName::StsSrc => "source_pairs",
            StageName::StsTgt => "target_pairs",
            StageName::NliSrc => "nli",
            StageName::MlmSrc => "source_corpus or nli",
        }
    }
}

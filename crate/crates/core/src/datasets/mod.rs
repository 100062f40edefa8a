//! Pair and corpus loaders plus the synthetic data generator.

pub mod loaders;
pub mod synth;

pub use loaders::{load_corpus, load_nli, load_pairs, parse_corpus, parse_pairs, NliDataset, PairDataset, SentenceCorpus};
pub use synth::{jaccard, synth_generate, unigram_js_divergence, SynthData, SynthSpec};

//! The synthetic generator: domain-shifted corpora and pairs whose gold
//! score is a noisy function of token overlap.

use argsim::datasets::{jaccard, synth_generate, unigram_js_divergence, SynthSpec};
use argsim::textproc::tokenize;

fn main() -> argsim::Result<()> {
    let spec = SynthSpec::default();
    let data = synth_generate(&spec)?;
    println!(
        "{} domain sentences, {} source pairs, {} target pairs (noise sigma {})",
        data.domain_corpus.len(),
        data.source_pairs.len(),
        data.target_pairs.len(),
        spec.noise
    );
    println!("\ntarget pairs:");
    for r in data.target_pairs.records.iter().take(5) {
        let j = jaccard(&tokenize(&r.sentence_a), &tokenize(&r.sentence_b));
        println!("  gold {:.2}  5*jaccard {:.2}  {:?} / {:?}", r.gold_score, 5.0 * j, r.sentence_a, r.sentence_b);
    }
    let source = data.source_pairs.sentences();
    println!("\nunigram JS divergence (nats):");
    println!("  target vs source  {:.4}", unigram_js_divergence(&data.target_corpus.sentences, &source));
    println!("  target vs domain  {:.4}", unigram_js_divergence(&data.target_corpus.sentences, &data.domain_corpus.sentences));
    println!("  domain vs source  {:.4}", unigram_js_divergence(&data.domain_corpus.sentences, &source));
    Ok(())
}

//! Sentence embeddings from a freshly initialized encoder, cosine scores,
//! and a checkpoint round trip.

use argsim::encoder::{embed_texts, Checkpoint, EncoderConfig, EncoderParams, RunMetadata};
use argsim::numcore::{cosine_similarity, stream, SeedPurpose};
use argsim::textproc::Vocab;

fn main() -> argsim::Result<()> {
    let sentences = [
        "gun control saves lives",
        "stricter gun control saves lives",
        "the death penalty is cruel",
        "marriage is a civil right",
    ];
    let vocab = Vocab::build(&sentences, 1, 100)?;
    let config = EncoderConfig::desk(vocab.len());
    println!(
        "encoder: {} layers, d={}, {} heads, {} parameters",
        config.num_layers,
        config.hidden,
        config.heads,
        config.param_count()
    );
    let params = EncoderParams::init(&config, &mut stream(42, 0, SeedPurpose::Init))?;

    let emb = embed_texts(&params, &vocab, &sentences, 8)?;
    println!("\ncosine similarity (untrained, so mostly lexical overlap):");
    for i in 0..sentences.len() {
        for j in i + 1..sentences.len() {
            let c = cosine_similarity(&emb[i], &emb[j])?;
            println!("  {c:+.4}  {:?} / {:?}", sentences[i], sentences[j]);
        }
    }

    let path = std::env::temp_dir().join("argsim-example.ckpt");
    let ck = Checkpoint::new(params, vocab, RunMetadata::new("example", 42, serde_json::json!([])))?;
    ck.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    let again = embed_texts(&loaded.params, &loaded.vocab, &sentences[..1], 1)?;
    println!("\nreloaded {}; embedding unchanged: {}", path.display(), again[0] == emb[0]);
    Ok(())
}

//! Vocabulary, encoding and MLM masking on a handful of sentences.

use argsim::numcore::{stream, SeedPurpose};
use argsim::textproc::{apply_mlm_mask_with, decode, encode, MaskConfig, MaskScheme, Vocab};

fn main() -> argsim::Result<()> {
    let corpus = [
        "Gun control laws reduce violent crime.",
        "The death penalty does not deter crime.",
        "Same-sex couples deserve equal marriage rights.",
        "Stricter gun laws would not stop criminals.",
    ];
    let vocab = Vocab::build(&corpus, 1, 100)?;
    println!("{} tokens; first ten: {:?}", vocab.len(), &vocab.tokens()[..10]);

    let seqs = corpus.iter().map(|s| encode(s, &vocab, 16)).collect::<argsim::Result<Vec<_>>>()?;
    println!("ids  {:?}", seqs[0].ids);
    println!("mask {:?}", seqs[0].attention_mask);

    for scheme in [MaskScheme::AllMask, MaskScheme::Bert801010] {
        let config = MaskConfig { rate: 0.15, scheme };
        let masked = apply_mlm_mask_with(&seqs, config, vocab.len(), &mut stream(42, 0, SeedPurpose::Mask))?;
        println!("\n{scheme:?}: {} targets", masked.targets.len());
        for (i, seq) in masked.inputs.iter().enumerate() {
            println!("  {}", decode(seq, &vocab).join(" "));
            let hidden: Vec<&str> = masked
                .positions
                .iter()
                .zip(&masked.targets)
                .filter(|((s, _), _)| *s == i)
                .map(|(_, &t)| vocab.token(t).unwrap_or("?"))
                .collect();
            println!("    targets {hidden:?}");
        }
    }
    Ok(())
}

#![allow(dead_code)]

use argsim::datasets::{synth_generate, SynthSpec};
use argsim::encoder::{EncoderConfig, EncoderParams, EncoderVars};
use argsim::numcore::{finite_diff_check, stream, GradCheckReport, Graph, Mode, ParamStore, SeedPurpose, Tensor};
use argsim::objectives::{mlm_loss_graph, nli_loss_graph, sts_loss_graph};
use argsim::textproc::{apply_mlm_mask, encode, Vocab};

pub const TOY_SENTENCES: [&str; 6] = [
    "the court upheld the ban on handguns",
    "capital punishment deters violent crime",
    "marriage equality protects every family",
    "the death penalty costs more than prison",
    "gun owners resist new registration laws",
    "courts should not define marriage",
];

pub fn toy_vocab() -> Vocab {
    Vocab::build(&TOY_SENTENCES, 1, 50).unwrap()
}

/// L=2, d=16, 4 heads, vocab under 50.
pub fn toy_config(vocab: &Vocab) -> EncoderConfig {
    let mut c = EncoderConfig::desk(vocab.len());
    c.hidden = 16;
    c.ff = 32;
    c.max_len = 12;
    c
}

pub fn toy_params(vocab: &Vocab, seed: u64) -> EncoderParams {
    EncoderParams::init(&toy_config(vocab), &mut stream(seed, 0, SeedPurpose::Init)).unwrap()
}

/// Scales every weight up so gradients are not vanishingly small.
pub fn spread(params: &mut EncoderParams, factor: f64) {
    for t in params.store.tensors_mut() {
        let ones = t.values().iter().all(|&v| v == 1.0);
        if !ones {
            t.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Textbook single-formula Pearson: (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²)).
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Average ranks by enumeration: 1 + (number below) + (number of other equal values) / 2.
pub fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// `n` synthetic sentences of `min_len..=max_len` distinct tokens.
pub fn synth_sentences(min_len: usize, max_len: usize, n: usize) -> Vec<String> {
    let spec = SynthSpec {
        min_len,
        max_len,
        domain_sentences: n,
        target_pairs: 1,
        source_pairs: 1,
        ..SynthSpec::default()
    };
    synth_generate(&spec).unwrap().domain_corpus.sentences
}

pub const GRAD_H: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

pub fn mlm_gradient_check() -> GradCheckReport {
    let vocab = toy_vocab();
    let mut params = toy_params(&vocab, 3);
    spread(&mut params, 20.0);
    let seqs: Vec<_> = TOY_SENTENCES[..3].iter().map(|s| encode(s, &vocab, 12).unwrap()).collect();
    let masked = apply_mlm_mask(&seqs, 0.3, &mut stream(1, 0, SeedPurpose::Mask)).unwrap();
    let config = params.config.clone();
    let loss_of = |store: &ParamStore| -> argsim::Result<(f64, ParamStore)> {
        let p = EncoderParams::from_store(&config, store.clone())?;
        let mut g = Graph::new();
        let vars = EncoderVars::register(&mut g, &p);
        let mut rng = stream(5, 0, SeedPurpose::Dropout);
        let loss = mlm_loss_graph(&mut g, &vars, &p, &masked, &mut Mode::Training(&mut rng))?;
        let mut s = store.clone();
        g.backward(loss)?.accumulate_into(&mut s, &vars.0)?;
        Ok((g.scalar(loss)?, s))
    };
    let mut store = loss_of(&params.store).unwrap().1;
    finite_diff_check(&mut store, |s| Ok(loss_of(s)?.0), GRAD_H, GRAD_TOL).unwrap()
}

pub fn sts_gradient_check() -> GradCheckReport {
    let vocab = toy_vocab();
    let mut params = toy_params(&vocab, 4);
    spread(&mut params, 20.0);
    let a: Vec<_> = TOY_SENTENCES[..3].iter().map(|s| encode(s, &vocab, 12).unwrap()).collect();
    let b: Vec<_> = TOY_SENTENCES[3..].iter().map(|s| encode(s, &vocab, 12).unwrap()).collect();
    let gold = [4.0, 1.0, 2.5];
    let config = params.config.clone();
    let loss_of = |store: &ParamStore| -> argsim::Result<(f64, ParamStore)> {
        let p = EncoderParams::from_store(&config, store.clone())?;
        let mut g = Graph::new();
        let vars = EncoderVars::register(&mut g, &p);
        let mut rng = stream(6, 0, SeedPurpose::Dropout);
        let loss = sts_loss_graph(&mut g, &vars, &p, &a, &b, &gold, &mut Mode::Training(&mut rng))?;
        let mut s = store.clone();
        g.backward(loss)?.accumulate_into(&mut s, &vars.0)?;
        Ok((g.scalar(loss)?, s))
    };
    let mut store = loss_of(&params.store).unwrap().1;
    finite_diff_check(&mut store, |s| Ok(loss_of(s)?.0), GRAD_H, GRAD_TOL).unwrap()
}

/// Checks the encoder and the classifier together.
pub fn nli_gradient_check() -> GradCheckReport {
    let vocab = toy_vocab();
    let mut params = toy_params(&vocab, 5);
    spread(&mut params, 20.0);
    let a: Vec<_> = TOY_SENTENCES[..3].iter().map(|s| encode(s, &vocab, 12).unwrap()).collect();
    let b: Vec<_> = TOY_SENTENCES[3..].iter().map(|s| encode(s, &vocab, 12).unwrap()).collect();
    let labels = [0, 2, 1];
    let config = params.config.clone();
    let n_enc = params.store.len();
    let d = config.hidden;
    let mut joint = params.store.clone();
    let w: Vec<f64> = (0..3 * 3 * d).map(|i| ((i * 37 % 17) as f64 - 8.0) * 0.1).collect();
    joint.push("nli.classifier", Tensor::new(vec![3, 3 * d], w).unwrap());
    let loss_of = |store: &ParamStore| -> argsim::Result<(f64, ParamStore)> {
        let mut enc_store = ParamStore::new();
        for (name, t) in store.iter().take(n_enc) {
            enc_store.push(name, t.clone());
        }
        let p = EncoderParams::from_store(&config, enc_store)?;
        let mut g = Graph::new();
        let mut vars = EncoderVars::register(&mut g, &p);
        let cls = g.param(store.tensor(n_enc));
        let mut rng = stream(7, 0, SeedPurpose::Dropout);
        let loss = nli_loss_graph(&mut g, &vars, &p, cls, &a, &b, &labels, &mut Mode::Training(&mut rng))?;
        vars.0.push(cls);
        let mut s = store.clone();
        g.backward(loss)?.accumulate_into(&mut s, &vars.0)?;
        Ok((g.scalar(loss)?, s))
    };
    let mut store = loss_of(&joint).unwrap().1;
    finite_diff_check(&mut store, |s| Ok(loss_of(s)?.0), GRAD_H, GRAD_TOL).unwrap()
}

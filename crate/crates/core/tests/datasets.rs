use std::fs;

use argsim::datasets::synth::{gold_score, TARGET_STREAM, SOURCE_STREAM};
use argsim::datasets::{jaccard, load_corpus, load_pairs, synth_generate, unigram_js_divergence, SynthSpec};
use argsim::numcore::{stream, SeedPurpose};
use argsim::textproc::tokenize;
use argsim::Error;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn pair_files_load_in_order_with_either_line_ending() {
    let dir = tempfile::tempdir().unwrap();
    let lf = "first claim\tsecond claim\t3.5\nguns kill\tguns save lives\t1\nsame\tsame\t5\n";
    let (a, b) = (dir.path().join("lf.tsv"), dir.path().join("crlf.tsv"));
    fs::write(&a, lf).unwrap();
    fs::write(&b, lf.replace('\n', "\r\n")).unwrap();
    let x = load_pairs(&a).unwrap();
    assert_eq!(x.len(), 3);
    assert_eq!(x.records[1].sentence_b, "guns save lives");
    assert_eq!(x.records, load_pairs(&b).unwrap().records);
}

#[test]
fn bad_score_error_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.tsv");
    fs::write(&p, "a\tb\t1\nc\td\t2\ne\tf\t7.0\n").unwrap();
    match load_pairs(&p).unwrap_err() {
        Error::Validation { path, line, .. } => {
            assert_eq!(path, p);
            assert_eq!(line, 3);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_pairs(&dir.path().join("missing.tsv")), Err(Error::Io { .. })));
}

#[test]
fn corpus_line_count_matches_wc() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("big.txt");
    let mut text = String::new();
    for i in 0..10_000 {
        text.push_str(&format!("sentence number {i}\n"));
        if i % 1000 == 0 {
            text.push('\n');
        }
    }
    fs::write(&p, &text).unwrap();
    let wc = text.lines().filter(|l| !l.trim().is_empty()).count();
    assert_eq!(wc, 10_000);
    assert_eq!(load_corpus(&p).unwrap().len(), wc);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    assert!(load_corpus(&empty).unwrap().is_empty());
    let two = dir.path().join("two.txt");
    fs::write(&two, "one\n\ntwo\n").unwrap();
    assert_eq!(load_corpus(&two).unwrap().sentences, ["one", "two"]);
}

#[test]
fn noiseless_extremes() {
    assert_eq!(gold_score("gun ban now", "now ban gun", 0.0, 0.7), 5.0);
    assert_eq!(gold_score("gun ban", "death penalty", 0.0, -1.2), 0.0);
}

#[test]
fn gold_is_jaccard_plus_replayed_noise() {
    let spec = SynthSpec {
        target_pairs: 300,
        source_pairs: 200,
        domain_sentences: 10,
        ..SynthSpec::default()
    };
    let data = synth_generate(&spec).unwrap();
    for (set, index) in [(&data.target_pairs, TARGET_STREAM), (&data.source_pairs, SOURCE_STREAM)] {
        let mut noise = stream(spec.seed, index, SeedPurpose::SynthNoise);
        for r in &set.records {
            let z: f64 = noise.sample(StandardNormal);
            let j = jaccard(&tokenize(&r.sentence_a), &tokenize(&r.sentence_b));
            let expect = (5.0 * j + spec.noise * z).clamp(0.0, 5.0);
            assert_eq!(r.gold_score, expect);
        }
    }
}

#[test]
fn tokens_are_distinct_within_sentences_and_pools_are_disjoint() {
    let data = synth_generate(&SynthSpec {
        domain_sentences: 200,
        target_pairs: 200,
        source_pairs: 200,
        ..SynthSpec::default()
    })
    .unwrap();
    for s in data.domain_corpus.sentences.iter().chain(&data.target_corpus.sentences) {
        let mut t = tokenize(s);
        let n = t.len();
        t.sort();
        t.dedup();
        assert_eq!(t.len(), n, "{s}");
    }
}

#[test]
fn target_data_is_shifted_from_source() {
    let data = synth_generate(&SynthSpec::default()).unwrap();
    assert_eq!(data.target_pairs.len(), 2000);
    let js = unigram_js_divergence(&data.target_corpus.sentences, &data.source_pairs.sentences());
    assert!(js > 0.05, "{js}");
    let within = unigram_js_divergence(&data.target_corpus.sentences[..2000], &data.target_corpus.sentences[2000..]);
    assert!(within < js);
}

#[test]
fn tsv_output_reloads_exactly() {
    let data = synth_generate(&SynthSpec {
        target_pairs: 100,
        ..SynthSpec::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.tsv");
    fs::write(&p, data.target_pairs.to_tsv()).unwrap();
    assert_eq!(load_pairs(&p).unwrap().records, data.target_pairs.records);
}

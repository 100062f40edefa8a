//! Synthetic stand-ins for the target, domain, and source datasets.
//!
//! Sentences are bags of pseudo-words drawn from two disjoint pools. Target
//! data and the domain corpus lean on the domain-specific pool, source pairs
//! on the general pool. A pair's gold score is `5 × Jaccard(a, b)` plus
//! Gaussian noise, clamped to `[0, 5]`.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loaders::{PairDataset, SentenceCorpus};
use crate::error::{Error, Result};
use crate::numcore::{stream, SeedPurpose, StreamRng};
use crate::objectives::{StsExample, MAX_SCORE};
use crate::textproc::tokenize;

const SYLLABLES: [&str; 20] = [
    "ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "zu", "ha", "je", "wi",
    "yo", "xu",
];

/// Stream indices inside [`SeedPurpose::SynthText`] / [`SeedPurpose::SynthNoise`].
pub const TARGET_STREAM: u64 = 0;
pub const SOURCE_STREAM: u64 = 1;
pub const DOMAIN_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub general_pool: usize,
    pub domain_pool: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub domain_sentences: usize,
    pub target_pairs: usize,
    pub source_pairs: usize,
    /// Probability that a target-data token comes from the domain pool.
    pub target_domain_share: f64,
    pub source_domain_share: f64,
    pub corpus_domain_share: f64,
    /// Standard deviation of the gold-score noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            general_pool: 120,
            domain_pool: 120,
            min_len: 5,
            max_len: 10,
            domain_sentences: 2000,
            target_pairs: 2000,
            source_pairs: 1000,
            target_domain_share: 0.8,
            source_domain_share: 0.1,
            corpus_domain_share: 0.7,
            noise: 0.3,
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        if self.min_len == 0 || self.min_len > self.max_len {
            return err(format!("sentence length range {}..={} is empty", self.min_len, self.max_len));
        }
        if self.general_pool < self.max_len || self.domain_pool < self.max_len {
            return err(format!(
                "pools of {} and {} tokens cannot fill sentences of {} distinct tokens",
                self.general_pool, self.domain_pool, self.max_len
            ));
        }
        if self.general_pool + self.domain_pool > SYLLABLES.len().pow(3) {
            return err("pools exceed the pseudo-word inventory".into());
        }
        for (name, p) in [
            ("target_domain_share", self.target_domain_share),
            ("source_domain_share", self.source_domain_share),
            ("corpus_domain_share", self.corpus_domain_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} {p} outside [0, 1]"));
            }
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return err(format!("noise {} must be non-negative", self.noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub domain_corpus: SentenceCorpus,
    /// The sentences of `target_pairs`, in pair order.
    pub target_corpus: SentenceCorpus,
    pub source_pairs: PairDataset,
    pub target_pairs: PairDataset,
}

/// Deterministic three-syllable pseudo-word for index `i`.
pub fn pseudo_word(i: usize) -> String {
    let n = SYLLABLES.len();
    [i / (n * n) % n, i / n % n, i % n]
        .iter()
        .map(|&k| SYLLABLES[k])
        .collect()
}

/// `Σ min(count) / Σ max(count)` over token multisets.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in a {
        counts.entry(t).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t).or_default().1 += 1;
    }
    let (inter, union) = counts
        .values()
        .fold((0, 0), |(i, u), &(x, y)| (i + x.min(y), u + x.max(y)));
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Gold score for a pair given one standard-normal draw.
pub fn gold_score(a: &str, b: &str, noise: f64, z: f64) -> f64 {
    (MAX_SCORE * jaccard(&tokenize(a), &tokenize(b)) + noise * z).clamp(0.0, MAX_SCORE)
}

struct Sampler<'a> {
    spec: &'a SynthSpec,
    general: Vec<String>,
    domain: Vec<String>,
}

impl Sampler<'_> {
    fn draw_distinct(&self, rng: &mut StreamRng, n: usize, share: f64, exclude: &[String]) -> Vec<String> {
        let n_domain = (0..n).filter(|_| rng.random::<f64>() < share).count();
        let mut out = Vec::with_capacity(n);
        for (pool, count) in [(&self.domain, n_domain), (&self.general, n - n_domain)] {
            let free: Vec<&String> = pool.iter().filter(|w| !exclude.contains(w)).collect();
            let count = count.min(free.len());
            out.extend(index::sample(rng, free.len(), count).into_iter().map(|i| free[i].clone()));
        }
        out
    }

    fn length(&self, rng: &mut StreamRng) -> usize {
        rng.random_range(self.spec.min_len..=self.spec.max_len)
    }

    fn sentence(&self, rng: &mut StreamRng, share: f64) -> Vec<String> {
        let n = self.length(rng);
        let mut words = self.draw_distinct(rng, n, share, &[]);
        words.shuffle(rng);
        words
    }

    /// A second sentence that keeps each token of `a` with a per-pair
    /// probability drawn uniformly from [0, 1].
    fn partner(&self, rng: &mut StreamRng, a: &[String], share: f64) -> Vec<String> {
        let keep_prob: f64 = rng.random();
        let mut b: Vec<String> = a.iter().filter(|_| rng.random::<f64>() < keep_prob).cloned().collect();
        let target = self.length(rng).max(b.len()).max(1);
        let fresh = self.draw_distinct(rng, target - b.len(), share, a);
        b.extend(fresh);
        b.shuffle(rng);
        b
    }

    fn pairs(&self, n: usize, share: f64, stream_index: u64) -> Result<Vec<StsExample>> {
        let mut text = stream(self.spec.seed, stream_index, SeedPurpose::SynthText);
        let mut noise = stream(self.spec.seed, stream_index, SeedPurpose::SynthNoise);
        (0..n)
            .map(|_| {
                let a = self.sentence(&mut text, share);
                let b = self.partner(&mut text, &a, share);
                let z: f64 = noise.sample(StandardNormal);
                let gold = (MAX_SCORE * jaccard(&a, &b) + self.spec.noise * z).clamp(0.0, MAX_SCORE);
                StsExample::new(a.join(" "), b.join(" "), gold)
            })
            .collect()
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let sampler = Sampler {
        spec,
        general: (0..spec.general_pool).map(pseudo_word).collect(),
        domain: (spec.general_pool..spec.general_pool + spec.domain_pool)
            .map(pseudo_word)
            .collect(),
    };
    let target = sampler.pairs(spec.target_pairs, spec.target_domain_share, TARGET_STREAM)?;
    let source = sampler.pairs(spec.source_pairs, spec.source_domain_share, SOURCE_STREAM)?;
    let mut rng = stream(spec.seed, DOMAIN_STREAM, SeedPurpose::SynthText);
    let domain: Vec<String> = (0..spec.domain_sentences)
        .map(|_| sampler.sentence(&mut rng, spec.corpus_domain_share).join(" "))
        .collect();
    let target_pairs = PairDataset {
        records: target,
        source: "synthetic-target".into(),
    };
    Ok(SynthData {
        domain_corpus: SentenceCorpus {
            sentences: domain,
            source: "synthetic-domain".into(),
        },
        target_corpus: SentenceCorpus {
            sentences: target_pairs.sentences(),
            source: "synthetic-target".into(),
        },
        source_pairs: PairDataset {
            records: source,
            source: "synthetic-source".into(),
        },
        target_pairs,
    })
}

/// Jensen–Shannon divergence (natural log) between two unigram
/// distributions estimated from sentences.
pub fn unigram_js_divergence<S: AsRef<str>, T: AsRef<str>>(p: &[S], q: &[T]) -> f64 {
    fn dist<S: AsRef<str>>(xs: &[S]) -> HashMap<String, f64> {
        let mut m = HashMap::new();
        let mut total = 0.0;
        for s in xs {
            for t in tokenize(s.as_ref()) {
                *m.entry(t).or_insert(0.0) += 1.0;
                total += 1.0;
            }
        }
        m.values_mut().for_each(|v| *v /= total);
        m
    }
    let (dp, dq) = (dist(p), dist(q));
    let mut keys: Vec<&String> = dp.keys().chain(dq.keys()).collect();
    keys.sort();
    keys.dedup();
    let kl = |a: f64, m: f64| if a > 0.0 { a * (a / m).ln() } else { 0.0 };
    keys.into_iter()
        .map(|k| {
            let a = dp.get(k).copied().unwrap_or(0.0);
            let b = dq.get(k).copied().unwrap_or(0.0);
            let m = 0.5 * (a + b);
            0.5 * kl(a, m) + 0.5 * kl(b, m)
        })
        .sum()
}


#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            domain_sentences: 50,
            target_pairs: 80,
            source_pairs: 40,
            ..SynthSpec::default()
        }
    }

    fn words(s: &str) -> Vec<String> {
        s.split(' ').map(str::to_string).collect()
    }

    #[test]
    fn pseudo_words_are_distinct_tokens() {
        let w: Vec<String> = (0..400).map(pseudo_word).collect();
        let mut d = w.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 400);
        assert!(w.iter().all(|x| tokenize(x) == [x.clone()]));
    }

    #[test]
    fn jaccard_extremes() {
        assert_eq!(jaccard(&words("a b c"), &words("c b a")), 1.0);
        assert_eq!(jaccard(&words("a b"), &words("c d")), 0.0);
        assert_eq!(jaccard(&words("a a b"), &words("a b b")), 0.5);
        assert_eq!(gold_score("a b", "b a", 0.0, 1.7), 5.0);
        assert_eq!(gold_score("a b", "c d", 0.0, -0.4), 0.0);
    }

    #[test]
    fn reproducible_from_spec() {
        assert_eq!(synth_generate(&small()).unwrap(), synth_generate(&small()).unwrap());
        let other = SynthSpec { seed: 7, ..small() };
        assert_ne!(synth_generate(&small()).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(synth_generate(&SynthSpec { domain_pool: 4, ..small() }).is_err());
        assert!(synth_generate(&SynthSpec { noise: -1.0, ..small() }).is_err());
        assert!(synth_generate(&SynthSpec { min_len: 9, max_len: 3, ..small() }).is_err());
    }

    #[test]
    fn shapes_and_ranges() {
        let d = synth_generate(&small()).unwrap();
        assert_eq!(d.target_pairs.len(), 80);
        assert_eq!(d.source_pairs.len(), 40);
        assert_eq!(d.domain_corpus.len(), 50);
        assert_eq!(d.target_corpus.len(), 160);
        for r in d.target_pairs.records.iter().chain(&d.source_pairs.records) {
            assert!((0.0..=5.0).contains(&r.gold_score));
            assert!(!r.sentence_a.is_empty() && !r.sentence_b.is_empty());
        }
    }
}

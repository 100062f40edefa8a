//! Training losses: masked-LM cross-entropy, cosine STS regression, and
//! the NLI classification control.

use serde::{Deserialize, Serialize};

use crate::encoder::{embed_batch, forward, Batch, EncoderParams, EncoderVars};
use crate::error::{Error, Result};
use crate::numcore::{Graph, Mode, ParamStore, Tensor, Var};
use crate::textproc::{encode, MaskedBatch, TokenSeq, Vocab, MASK, NUM_SPECIALS};

pub use crate::numcore::cosine_similarity;

/// Gold similarity scores live on this scale; regression targets are
/// `gold / MAX_SCORE`.
pub const MAX_SCORE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsExample {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold_score: f64,
}

impl StsExample {
    pub fn new(a: impl Into<String>, b: impl Into<String>, gold_score: f64) -> Result<Self> {
        if !(0.0..=MAX_SCORE).contains(&gold_score) {
            return Err(Error::Input(format!("gold score {gold_score} outside [0, 5]")));
        }
        Ok(StsExample {
            sentence_a: a.into(),
            sentence_b: b.into(),
            gold_score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliLabel {
    Entailment = 0,
    Neutral = 1,
    Contradiction = 2,
}

impl NliLabel {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" | "0" => Some(NliLabel::Entailment),
            "neutral" | "1" => Some(NliLabel::Neutral),
            "contradiction" | "2" => Some(NliLabel::Contradiction),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliExample {
    pub premise: String,
    pub hypothesis: String,
    pub label: NliLabel,
}

/// Linear classifier over `[u; v; |u − v|]`, weights `[3, 3d]`, no bias.
pub fn nli_head(hidden: usize) -> ParamStore {
    let mut s = ParamStore::new();
    s.push("nli.classifier", Tensor::zeros(vec![NliLabel::COUNT, 3 * hidden]));
    s
}

/// Mean cross-entropy of the tied output projection at masked positions.
pub fn mlm_loss_graph(
    g: &mut Graph,
    vars: &EncoderVars,
    params: &EncoderParams,
    masked: &MaskedBatch,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    if masked.targets.is_empty() {
        return Err(Error::Contract("masked batch has no target positions".into()));
    }
    let batch = Batch::from_seqs(&masked.inputs, true)?;
    let enc = forward(g, vars, &params.config, &batch, mode)?;
    let rows: Vec<usize> = masked.positions.iter().map(|&(s, p)| s * batch.seq + p).collect();
    let picked = g.gather_rows(enc.states, &rows)?;
    let logits = mlm_logits(g, vars, picked)?;
    g.cross_entropy(logits, &masked.targets)
}

/// Vocabulary logits for `[n, d]` states through the transposed token table.
pub fn mlm_logits(g: &mut Graph, vars: &EncoderVars, states: Var) -> Result<Var> {
    let table_t = g.transpose(vars.token_embedding())?;
    let logits = g.matmul(states, table_t)?;
    g.add(logits, vars.mlm_bias())
}

pub fn mlm_loss(params: &EncoderParams, masked: &MaskedBatch, mode: &mut Mode<'_>) -> Result<f64> {
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let loss = mlm_loss_graph(&mut g, &vars, params, masked, mode)?;
    g.scalar(loss)
}

/// Inference-mode argmax prediction at each masked position.
pub fn mlm_predict(params: &EncoderParams, masked: &MaskedBatch) -> Result<Vec<usize>> {
    if masked.positions.is_empty() {
        return Ok(Vec::new());
    }
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let batch = Batch::from_seqs(&masked.inputs, true)?;
    let enc = forward(&mut g, &vars, &params.config, &batch, &mut Mode::Inference)?;
    let rows: Vec<usize> = masked.positions.iter().map(|&(s, p)| s * batch.seq + p).collect();
    let picked = g.gather_rows(enc.states, &rows)?;
    let logits = mlm_logits(&mut g, &vars, picked)?;
    let v = g.shape(logits)[1];
    Ok(g.value(logits)
        .chunks(v)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        })
        .collect())
}

/// Masks each eligible position of each sequence on its own and reports
/// the fraction the model recovers.
pub fn mlm_accuracy(params: &EncoderParams, seqs: &[TokenSeq]) -> Result<f64> {
    let mut masked = MaskedBatch {
        inputs: Vec::new(),
        positions: Vec::new(),
        targets: Vec::new(),
        skipped: 0,
    };
    for seq in seqs {
        for p in 0..seq.ids.len() {
            if seq.attention_mask[p] == 1 && seq.ids[p] >= NUM_SPECIALS {
                let mut input = seq.clone();
                input.ids[p] = MASK;
                masked.positions.push((masked.inputs.len(), p));
                masked.targets.push(seq.ids[p]);
                masked.inputs.push(input);
            }
        }
    }
    if masked.targets.is_empty() {
        return Err(Error::Contract("no maskable positions".into()));
    }
    let predicted = mlm_predict(params, &masked)?;
    let hits = predicted.iter().zip(&masked.targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / masked.targets.len() as f64)
}

/// Encodes both sides through the same tower in one pass and returns the
/// `[n, d]` embeddings of the `a` and `b` sentences.
pub fn pair_embeddings(
    g: &mut Graph,
    vars: &EncoderVars,
    params: &EncoderParams,
    a: &[TokenSeq],
    b: &[TokenSeq],
    mode: &mut Mode<'_>,
) -> Result<(Var, Var)> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Contract(format!("pair batch of {} and {} sentences", a.len(), b.len())));
    }
    let n = a.len();
    let both: Vec<TokenSeq> = a.iter().chain(b).cloned().collect();
    let batch = Batch::from_seqs(&both, true)?;
    let pooled = embed_batch(g, vars, &params.config, &batch, mode)?;
    let u = g.gather_rows(pooled, &(0..n).collect::<Vec<_>>())?;
    let v = g.gather_rows(pooled, &(n..2 * n).collect::<Vec<_>>())?;
    Ok((u, v))
}

/// Mean squared error between pair cosine and `gold / 5`.
pub fn sts_loss_graph(
    g: &mut Graph,
    vars: &EncoderVars,
    params: &EncoderParams,
    a: &[TokenSeq],
    b: &[TokenSeq],
    gold: &[f64],
    mode: &mut Mode<'_>,
) -> Result<Var> {
    if gold.len() != a.len() {
        return Err(Error::Contract(format!("{} gold scores for {} pairs", gold.len(), a.len())));
    }
    let (u, v) = pair_embeddings(g, vars, params, a, b, mode)?;
    let cos = g.row_cosine(u, v)?;
    let target = Tensor::new(vec![gold.len()], gold.iter().map(|s| s / MAX_SCORE).collect())?;
    let target = g.constant(&target);
    let diff = g.sub(cos, target)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean(sq))
}

fn encode_pairs(vocab: &Vocab, max_len: usize, batch: &[StsExample]) -> Result<(Vec<TokenSeq>, Vec<TokenSeq>, Vec<f64>)> {
    let mut a = Vec::with_capacity(batch.len());
    let mut b = Vec::with_capacity(batch.len());
    for ex in batch {
        a.push(encode(&ex.sentence_a, vocab, max_len)?);
        b.push(encode(&ex.sentence_b, vocab, max_len)?);
    }
    Ok((a, b, batch.iter().map(|e| e.gold_score).collect()))
}

pub fn sts_loss(params: &EncoderParams, vocab: &Vocab, batch: &[StsExample], mode: &mut Mode<'_>) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty STS batch".into()));
    }
    let (a, b, gold) = encode_pairs(vocab, params.config.max_len, batch)?;
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let loss = sts_loss_graph(&mut g, &vars, params, &a, &b, &gold, mode)?;
    g.scalar(loss)
}

/// `[n, 3d]` classifier features `[u; v; |u − v|]`.
pub fn nli_features(g: &mut Graph, u: Var, v: Var) -> Result<Var> {
    let diff = g.abs_diff(u, v)?;
    g.concat(&[u, v, diff])
}

/// Softmax cross-entropy of the NLI head. `classifier` is the `[3, 3d]`
/// weight leaf.
#[allow(clippy::too_many_arguments)]
pub fn nli_loss_graph(
    g: &mut Graph,
    vars: &EncoderVars,
    params: &EncoderParams,
    classifier: Var,
    premise: &[TokenSeq],
    hypothesis: &[TokenSeq],
    labels: &[usize],
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let (u, v) = pair_embeddings(g, vars, params, premise, hypothesis, mode)?;
    let features = nli_features(g, u, v)?;
    let wt = g.transpose(classifier)?;
    let logits = g.matmul(features, wt)?;
    g.cross_entropy(logits, labels)
}

pub fn nli_loss(
    params: &EncoderParams,
    vocab: &Vocab,
    classifier: &ParamStore,
    batch: &[NliExample],
    mode: &mut Mode<'_>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Contract("empty NLI batch".into()));
    }
    let max_len = params.config.max_len;
    let premise = batch.iter().map(|e| encode(&e.premise, vocab, max_len)).collect::<Result<Vec<_>>>()?;
    let hypothesis = batch.iter().map(|e| encode(&e.hypothesis, vocab, max_len)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = batch.iter().map(|e| e.label.index()).collect();
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let w = g.param(classifier.tensor(0));
    let loss = nli_loss_graph(&mut g, &vars, params, w, &premise, &hypothesis, &labels, mode)?;
    g.scalar(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_range_is_enforced() {
        assert!(StsExample::new("a", "b", 5.0).is_ok());
        assert!(StsExample::new("a", "b", 0.0).is_ok());
        assert!(StsExample::new("a", "b", 5.01).is_err());
        assert!(StsExample::new("a", "b", -0.1).is_err());
    }

    #[test]
    fn nli_labels_parse() {
        assert_eq!(NliLabel::parse("Entailment"), Some(NliLabel::Entailment));
        assert_eq!(NliLabel::parse("2"), Some(NliLabel::Contradiction));
        assert_eq!(NliLabel::parse("maybe"), None);
    }
}

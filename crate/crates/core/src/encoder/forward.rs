use super::config::{EncoderConfig, Pooling};
use super::params::{EncoderParams, LayerSlot};
use crate::error::{Error, Result};
use crate::numcore::{Graph, KeyMask, Mode, Tensor, Var};
use crate::textproc::{encode, TokenSeq, Vocab};

/// Sentences laid out as `[size, seq]` ids plus the matching 0/1 mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub mask: Vec<u8>,
    pub size: usize,
    pub seq: usize,
}

impl Batch {
    /// Stacks encoded sentences. With `trim`, trailing positions that are
    /// padding in every sentence are dropped; real-position outputs are
    /// unaffected because padded keys receive zero attention.
    pub fn from_seqs(seqs: &[TokenSeq], trim: bool) -> Result<Self> {
        let first = seqs.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
        let seq = if trim {
            seqs.iter().map(|s| s.len).max().unwrap_or(1).max(1)
        } else {
            let padded = first.padded_len();
            if let Some(s) = seqs.iter().find(|s| s.padded_len() != padded) {
                return Err(Error::Input(format!(
                    "mixed padded lengths {padded} and {} in one batch",
                    s.padded_len()
                )));
            }
            padded
        };
        let mut ids = Vec::with_capacity(seqs.len() * seq);
        let mut mask = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            if s.len > seq || s.ids.len() < seq {
                return Err(Error::Input(format!("sequence of length {} does not fit {seq}", s.len)));
            }
            ids.extend_from_slice(&s.ids[..seq]);
            mask.extend_from_slice(&s.attention_mask[..seq]);
        }
        Ok(Batch {
            ids,
            mask,
            size: seqs.len(),
            seq,
        })
    }
}

/// The encoder's parameters registered as leaves on one graph.
#[derive(Debug, Clone)]
pub struct EncoderVars(pub Vec<Var>);

impl EncoderVars {
    pub fn register(g: &mut Graph, params: &EncoderParams) -> Self {
        EncoderVars(g.params(&params.store))
    }

    fn layer(&self, layer: usize, slot: LayerSlot) -> Var {
        self.0[EncoderParams::layer_index(layer, slot)]
    }

    pub fn token_embedding(&self) -> Var {
        self.0[EncoderParams::TOKEN_EMBEDDING]
    }

    pub fn mlm_bias(&self) -> Var {
        *self.0.last().expect("params are never empty")
    }
}

#[derive(Debug, Clone)]
pub struct Encoded {
    /// `[size, seq, hidden]`.
    pub states: Var,
    /// Per layer, `[size * heads, seq, seq]` attention weights.
    pub attention: Vec<Var>,
}

/// Post-norm transformer stack over token plus learned position embeddings.
pub fn forward(
    g: &mut Graph,
    vars: &EncoderVars,
    config: &EncoderConfig,
    batch: &Batch,
    mode: &mut Mode<'_>,
) -> Result<Encoded> {
    let (b, t, d, h) = (batch.size, batch.seq, config.hidden, config.heads);
    if t > config.max_len {
        return Err(Error::Input(format!("sequence length {t} exceeds max_len {}", config.max_len)));
    }
    let positions: Vec<usize> = (0..b).flat_map(|_| 0..t).collect();
    let tok = g.embedding(vars.token_embedding(), &batch.ids)?;
    let pos = g.embedding(vars.0[EncoderParams::POSITION_EMBEDDING], &positions)?;
    let x = g.add(tok, pos)?;
    let mut x = g.reshape(x, vec![b, t, d])?;

    let keep: Vec<bool> = batch.mask.iter().map(|&m| m != 0).collect();
    let key_mask = KeyMask::new(keep, t, h * t)?;
    let inv_sqrt_dh = 1.0 / (config.head_dim() as f64).sqrt();
    let mut attention = Vec::with_capacity(config.num_layers);

    for l in 0..config.num_layers {
        let q = g.matmul(x, vars.layer(l, LayerSlot::Query))?;
        let k = g.matmul(x, vars.layer(l, LayerSlot::Key))?;
        let v = g.matmul(x, vars.layer(l, LayerSlot::Value))?;
        let (q, k, v) = (g.split_heads(q, h)?, g.split_heads(k, h)?, g.split_heads(v, h)?);
        let scores = g.batch_matmul(q, k, true)?;
        let scores = g.scale(scores, inv_sqrt_dh);
        let probs = g.softmax(scores, Some(key_mask.clone()))?;
        attention.push(probs);
        let probs = g.dropout(probs, config.dropout, mode)?;
        let ctx = g.batch_matmul(probs, v, false)?;
        let ctx = g.merge_heads(ctx, h)?;
        let attn = g.matmul(ctx, vars.layer(l, LayerSlot::Output))?;
        let res = g.add(x, attn)?;
        x = g.layer_norm(
            res,
            vars.layer(l, LayerSlot::AttnNormGain),
            vars.layer(l, LayerSlot::AttnNormBias),
        )?;

        let hid = g.matmul(x, vars.layer(l, LayerSlot::FfIn))?;
        let hid = g.add(hid, vars.layer(l, LayerSlot::FfInBias))?;
        let hid = g.gelu(hid);
        let ff = g.matmul(hid, vars.layer(l, LayerSlot::FfOut))?;
        let ff = g.add(ff, vars.layer(l, LayerSlot::FfOutBias))?;
        let ff = g.dropout(ff, config.dropout, mode)?;
        let res = g.add(x, ff)?;
        x = g.layer_norm(
            res,
            vars.layer(l, LayerSlot::FfNormGain),
            vars.layer(l, LayerSlot::FfNormBias),
        )?;
    }
    Ok(Encoded { states: x, attention })
}

/// Sentence vectors `[size, hidden]` from token states.
pub fn pool(g: &mut Graph, states: Var, batch: &Batch, pooling: Pooling) -> Result<Var> {
    match pooling {
        Pooling::Mean => g.masked_mean(states, &batch.mask),
        Pooling::Cls => {
            let rows: Vec<usize> = (0..batch.size).map(|i| i * batch.seq).collect();
            g.gather_rows(states, &rows)
        }
    }
}

/// Forward pass followed by pooling.
pub fn embed_batch(
    g: &mut Graph,
    vars: &EncoderVars,
    config: &EncoderConfig,
    batch: &Batch,
    mode: &mut Mode<'_>,
) -> Result<Var> {
    let enc = forward(g, vars, config, batch, mode)?;
    pool(g, enc.states, batch, config.pooling)
}

/// Token states `[batch, padded_len, hidden]` for already-encoded sentences.
pub fn encode_tokens(params: &EncoderParams, batch: &[TokenSeq], mode: &mut Mode<'_>) -> Result<Tensor> {
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let b = Batch::from_seqs(batch, false)?;
    let enc = forward(&mut g, &vars, &params.config, &b, mode)?;
    Ok(g.tensor(enc.states))
}

/// Mean of `states` (`[batch, seq, d]`) over positions where `mask` is 1.
pub fn pool_mean(states: &Tensor, mask: &[u8]) -> Result<Tensor> {
    let mut g = Graph::new();
    let s = g.constant(states);
    let out = g.masked_mean(s, mask)?;
    Ok(g.tensor(out))
}

/// Inference-mode embedding of one sentence.
pub fn embed_sentence(params: &EncoderParams, vocab: &Vocab, text: &str) -> Result<Vec<f64>> {
    Ok(embed_texts(params, vocab, &[text], 1)?.remove(0))
}

/// Inference-mode embeddings of many sentences, `batch_size` at a time.
pub fn embed_texts<S: AsRef<str>>(
    params: &EncoderParams,
    vocab: &Vocab,
    texts: &[S],
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let d = params.config.hidden;
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size.max(1)) {
        let seqs = chunk
            .iter()
            .map(|t| encode(t.as_ref(), vocab, params.config.max_len))
            .collect::<Result<Vec<_>>>()?;
        let batch = Batch::from_seqs(&seqs, true)?;
        let mut g = Graph::new();
        let vars = EncoderVars::register(&mut g, params);
        let pooled = embed_batch(&mut g, &vars, &params.config, &batch, &mut Mode::Inference)?;
        out.extend(g.value(pooled).chunks(d).map(<[f64]>::to_vec));
    }
    Ok(out)
}

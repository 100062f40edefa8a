//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends one node to the [`Graph`]; nodes only reference
//! earlier nodes, so the tape order is already topological and `backward`
//! is a single reverse sweep. Gradients accumulate additively across fan-out.

use rand::Rng;

use super::seeds::StreamRng;
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether a forward pass samples dropout.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut StreamRng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Training(_))
    }
}

/// Key-padding mask for a softmax over attention scores laid out as
/// `[batch * heads, queries, keys]`.
#[derive(Debug, Clone)]
pub struct KeyMask {
    /// `[batch, keys]`, true where the key is a real token.
    keep: Vec<bool>,
    keys: usize,
    /// Consecutive score rows that share one batch entry (`heads * queries`).
    rows_per_entry: usize,
}

impl KeyMask {
    pub fn new(keep: Vec<bool>, keys: usize, rows_per_entry: usize) -> Result<Self> {
        if keys == 0 || !keep.len().is_multiple_of(keys) {
            return Err(Error::dim(
                "key_mask",
                format!("{} mask entries for {keys} keys", keep.len()),
            ));
        }
        Ok(KeyMask {
            keep,
            keys,
            rows_per_entry,
        })
    }

    fn row(&self, score_row: usize) -> &[bool] {
        let entry = score_row / self.rows_per_entry;
        &self.keep[entry * self.keys..(entry + 1) * self.keys]
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    SplitHeads { x: Var, batch: usize, seq: usize, heads: usize },
    MergeHeads { x: Var, batch: usize, seq: usize, heads: usize },
    Reshape(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var },
    Gelu(Var),
    Embedding { table: Var, ids: Vec<usize> },
    MaskedMean { x: Var, weights: Vec<f64>, seq: usize },
    Concat(Vec<Var>),
    AbsDiff(Var, Var),
    Dropout { x: Var, scale: Vec<f64> },
    GatherRows { x: Var, rows: Vec<usize> },
    RowCosine(Var, Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
}

/// A recorded computation. Build it with the primitive methods, then call
/// [`Graph::backward`] on a scalar node.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, or zeros when the root does not depend on it.
    pub fn get_or_zero(&self, var: Var) -> Vec<f64> {
        self.get(var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.lens[var.0]])
    }

    /// Accumulates the gradient of each `vars[i]` into `store.tensor(i)`.
    /// Leaves the root does not reach receive an explicit zero gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore, vars: &[Var]) -> Result<()> {
        if vars.len() != store.len() {
            return Err(Error::Contract(format!(
                "{} graph leaves for {} parameter tensors",
                vars.len(),
                store.len()
            )));
        }
        for (i, &v) in vars.iter().enumerate() {
            let t = store.tensor_mut(i);
            match self.get(v) {
                Some(g) => t.accumulate_grad(g)?,
                None if t.grad().is_none() => t.zero_grad(),
                None => {}
            }
        }
        Ok(())
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("node shapes are never empty")
}

// out[m,n] += a[m,k] * b[k,n]
fn mm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[m,n] += a[m,k] * b[n,k]^T
fn mm_a_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

// out[k,n] += a[m,k]^T * b[m,n]
fn mm_at_b_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Draws an inverted-dropout scale vector: each entry is 0 with probability
/// `rate`, otherwise `1 / (1 - rate)`.
pub fn dropout_scale(len: usize, rate: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Applies dropout to a standalone tensor. Identity outside training mode.
pub fn dropout(x: &Tensor, rate: f64, mode: &mut Mode<'_>) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
    }
    match mode {
        Mode::Training(rng) if rate > 0.0 => {
            let scale = dropout_scale(x.len(), rate, rng)?;
            let values = x.values().iter().zip(&scale).map(|(v, s)| v * s).collect();
            Tensor::new(x.shape().to_vec(), values)
        }
        _ => Ok(Tensor::new(x.shape().to_vec(), x.values().to_vec())?),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Number of differentiable leaves registered on this graph.
    pub fn param_leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Leaf) && n.requires_grad)
            .count()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies the node's value into a fresh tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("graph nodes keep valid shapes")
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.nodes[v.0].value.as_slice() {
            [x] => Ok(*x),
            other => Err(Error::Contract(format!(
                "expected a scalar node, found {} values",
                other.len()
            ))),
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>, inputs: &[Var]) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            shape,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape: t.shape().to_vec(),
            value: t.values().to_vec(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf holding a copy of `t`.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push_leaf(t, true)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// Registers every tensor of `store` as a differentiable leaf, in order.
    pub fn params(&mut self, store: &ParamStore) -> Vec<Var> {
        store.tensors().iter().map(|t| self.param(t)).collect()
    }

    /// `a + b`, where `b`'s shape equals `a`'s shape or a trailing suffix
    /// of it (broadcast over the leading dimensions).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::dim("add", format!("{sa:?} + {sb:?}")));
        }
        let nb = numel(sb);
        let bv = self.value(b);
        let value = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % nb])
            .collect();
        Ok(self.push(Op::Add(a, b), sa, value, &[a, b]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(self.shape(a).to_vec())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Op::Sub(a, b), shape, value, &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Op::Mul(a, b), shape, value, &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * s).collect();
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(a, s), shape, value, &[a])
    }

    /// `[..., k] x [k, n] -> [..., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let k = last_dim(&sa);
        if sb.len() != 2 || sb[0] != k {
            return Err(Error::dim("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, n) = (numel(&sa) / k, sb[1]);
        let mut value = vec![0.0; m * n];
        mm_acc(self.value(a), self.value(b), &mut value, m, k, n);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        Ok(self.push(Op::MatMul(a, b), shape, value, &[a, b]))
    }

    /// Transpose of a 2-D node.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("transpose", format!("expected 2-D, got {s:?}")));
        }
        let (r, c) = (s[0], s[1]);
        let av = self.value(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = av[i * c + j];
            }
        }
        Ok(self.push(Op::Transpose(a), vec![c, r], value, &[a]))
    }

    /// Batched product `[B, m, k] x [B, k, n]`, or `[B, m, k] x [B, n, k]^T`
    /// when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::dim("batch_matmul", format!("{sa:?} x {sb:?} (trans_b={trans_b})"));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let kb = if trans_b { sb[2] } else { sb[1] };
        if kb != k {
            return Err(bad());
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut value = vec![0.0; batch * m * n];
        for e in 0..batch {
            let ae = &av[e * m * k..(e + 1) * m * k];
            let be = &bv[e * k * n..(e + 1) * k * n];
            let oe = &mut value[e * m * n..(e + 1) * m * n];
            if trans_b {
                mm_a_bt_acc(ae, be, oe, m, k, n);
            } else {
                mm_acc(ae, be, oe, m, k, n);
            }
        }
        Ok(self.push(Op::BatchMatMul { a, b, trans_b }, vec![batch, m, n], value, &[a, b]))
    }

    /// `[B, T, h*dh] -> [B*h, T, dh]`.
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || !s[2].is_multiple_of(heads) {
            return Err(Error::dim("split_heads", format!("{s:?} into {heads} heads")));
        }
        let (batch, seq, d) = (s[0], s[1], s[2]);
        let dh = d / heads;
        let xv = self.value(x);
        let mut value = vec![0.0; xv.len()];
        for b in 0..batch {
            for t in 0..seq {
                for h in 0..heads {
                    let src = (b * seq + t) * d + h * dh;
                    let dst = ((b * heads + h) * seq + t) * dh;
                    value[dst..dst + dh].copy_from_slice(&xv[src..src + dh]);
                }
            }
        }
        Ok(self.push(
            Op::SplitHeads { x, batch, seq, heads },
            vec![batch * heads, seq, dh],
            value,
            &[x],
        ))
    }

    /// `[B*h, T, dh] -> [B, T, h*dh]`.
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || !s[0].is_multiple_of(heads) {
            return Err(Error::dim("merge_heads", format!("{s:?} from {heads} heads")));
        }
        let (batch, seq, dh) = (s[0] / heads, s[1], s[2]);
        let d = dh * heads;
        let xv = self.value(x);
        let mut value = vec![0.0; xv.len()];
        for b in 0..batch {
            for t in 0..seq {
                for h in 0..heads {
                    let dst = (b * seq + t) * d + h * dh;
                    let src = ((b * heads + h) * seq + t) * dh;
                    value[dst..dst + dh].copy_from_slice(&xv[src..src + dh]);
                }
            }
        }
        Ok(self.push(
            Op::MergeHeads { x, batch, seq, heads },
            vec![batch, seq, d],
            value,
            &[x],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != numel(self.shape(x)) || shape.contains(&0) {
            return Err(Error::dim("reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        let value = self.value(x).to_vec();
        Ok(self.push(Op::Reshape(x), shape, value, &[x]))
    }

    /// Softmax over the last axis. With a key mask, masked entries get
    /// exactly zero weight and are excluded from the normalizer.
    pub fn softmax(&mut self, x: Var, mask: Option<KeyMask>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let cols = last_dim(&s);
        let rows = numel(&s) / cols;
        if let Some(m) = &mask {
            if m.keys != cols || m.keep.len() / m.keys * m.rows_per_entry != rows {
                return Err(Error::dim(
                    "softmax",
                    format!("mask for {} keys x {} entries vs scores {s:?}", m.keys, m.keep.len() / m.keys),
                ));
            }
        }
        let xv = self.value(x);
        let mut value = vec![0.0; xv.len()];
        for r in 0..rows {
            let xr = &xv[r * cols..(r + 1) * cols];
            let keep = mask.as_ref().map(|m| m.row(r));
            let live = |j: usize| keep.is_none_or(|k| k[j]);
            let max = (0..cols)
                .filter(|&j| live(j))
                .map(|j| xr[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!("softmax row {r} has no unmasked entries")));
            }
            let out = &mut value[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for j in (0..cols).filter(|&j| live(j)) {
                out[j] = (xr[j] - max).exp();
                total += out[j];
            }
            for o in out.iter_mut() {
                *o /= total;
            }
        }
        Ok(self.push(Op::Softmax(x), s, value, &[x]))
    }

    /// Layer normalization over the last axis with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = last_dim(&s);
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!("input {s:?}, gain {:?}, bias {:?}", self.shape(gain), self.shape(bias)),
            ));
        }
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let mut value = vec![0.0; xv.len()];
        for (row, out) in xv.chunks(d).zip(value.chunks_mut(d)) {
            let (_, _, xhat) = normalize_row(row);
            for j in 0..d {
                out[j] = gv[j] * xhat[j] + bv[j];
            }
        }
        Ok(self.push(Op::LayerNorm { x, gain, bias }, s, value, &[x, gain, bias]))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).iter().map(|&v| gelu(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Gelu(x), shape, value, &[x])
    }

    /// Row lookup into a `[V, d]` table; output `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::dim("embedding", format!("table {s:?} is not 2-D")));
        }
        let (vocab, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Input(format!("token id {bad} out of range for table of {vocab} rows")));
        }
        if ids.is_empty() {
            return Err(Error::dim("embedding", "no ids"));
        }
        let tv = self.value(table);
        let mut value = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            value.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Op::Embedding { table, ids: ids.to_vec() },
            vec![ids.len(), d],
            value,
            &[table],
        ))
    }

    /// Mean over the sequence axis of `[B, T, d]` restricted to positions
    /// where `mask` (`[B, T]`, 0/1) is set. Output `[B, d]`.
    pub fn masked_mean(&mut self, x: Var, mask: &[u8]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || mask.len() != s[0] * s[1] {
            return Err(Error::dim("masked_mean", format!("states {s:?}, mask of {}", mask.len())));
        }
        let (batch, seq, d) = (s[0], s[1], s[2]);
        let mut weights = vec![0.0; batch * seq];
        for b in 0..batch {
            let row = &mask[b * seq..(b + 1) * seq];
            let count = row.iter().filter(|&&m| m != 0).count();
            if count == 0 {
                return Err(Error::Contract(format!("mask row {b} selects no positions")));
            }
            for t in 0..seq {
                if row[t] != 0 {
                    weights[b * seq + t] = 1.0 / count as f64;
                }
            }
        }
        let xv = self.value(x);
        let mut value = vec![0.0; batch * d];
        for b in 0..batch {
            let out = &mut value[b * d..(b + 1) * d];
            for t in 0..seq {
                let w = weights[b * seq + t];
                if w == 0.0 {
                    continue;
                }
                let src = &xv[(b * seq + t) * d..(b * seq + t + 1) * d];
                for (o, v) in out.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        }
        Ok(self.push(Op::MaskedMean { x, weights, seq }, vec![batch, d], value, &[x]))
    }

    /// Concatenation along the last axis; leading shapes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let lead = self.shape(*first)[..self.shape(*first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::dim("concat", format!("{:?} vs leading {lead:?}", s)));
            }
            widths.push(last_dim(s));
        }
        let rows = numel(&lead);
        let total: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                value.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Op::Concat(parts.to_vec()), shape, value, parts))
    }

    /// Elementwise `|a - b|`.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("abs_diff", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| (x - y).abs()).collect();
        Ok(self.push(Op::AbsDiff(a, b), shape, value, &[a, b]))
    }

    /// Inverted dropout. Returns `x` itself in inference mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let Mode::Training(rng) = mode else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let scale = dropout_scale(self.value(x).len(), rate, rng)?;
        let value = self.value(x).iter().zip(&scale).map(|(v, s)| v * s).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Dropout { x, scale }, shape, value, &[x]))
    }

    /// Selects rows of a node viewed as `[rows, last_dim]`.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let d = last_dim(self.shape(x));
        let n = numel(self.shape(x)) / d;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::dim("gather_rows", format!("row {bad} of {n}")));
        }
        if rows.is_empty() {
            return Err(Error::dim("gather_rows", "no rows selected"));
        }
        let xv = self.value(x);
        let mut value = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            value.extend_from_slice(&xv[r * d..(r + 1) * d]);
        }
        Ok(self.push(
            Op::GatherRows { x, rows: rows.to_vec() },
            vec![rows.len(), d],
            value,
            &[x],
        ))
    }

    /// Cosine similarity between matching rows of two `[B, d]` nodes.
    /// Output `[B]`. A zero-norm row is a numeric error.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("row_cosine", a, b)?;
        let d = last_dim(&shape);
        let rows = numel(&shape) / d;
        let mut value = Vec::with_capacity(rows);
        for r in 0..rows {
            let (u, v) = (&self.value(a)[r * d..(r + 1) * d], &self.value(b)[r * d..(r + 1) * d]);
            value.push(cosine_similarity(u, v)?);
        }
        Ok(self.push(Op::RowCosine(a, b), vec![rows], value, &[a, b]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        self.push(Op::Sum(x), vec![1], vec![total], &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(x), vec![1], vec![m], &[x])
    }

    /// Mean softmax cross-entropy of `[N, C]` logits against class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        let c = last_dim(&s);
        let n = numel(&s) / c;
        if s.len() != 2 || targets.len() != n {
            return Err(Error::dim("cross_entropy", format!("logits {s:?}, {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Input(format!("target class {bad} out of range for {c} classes")));
        }
        let lv = self.value(logits);
        let mut total = 0.0;
        for (row, &t) in lv.chunks(c).zip(targets) {
            total += log_sum_exp(row) - row[t];
        }
        Ok(self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec() },
            vec![1],
            vec![total / n as f64],
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("root {root:?} is not on this graph")));
        }
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, has shape {:?}",
                self.nodes[root.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &dy, &mut grads);
        }
        Ok(Gradients {
            grads,
            lens: self.nodes.iter().map(|n| n.value.len()).collect(),
        })
    }

    fn backprop_node(&self, node: &Node, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.as_slice();
        let shp = |v: Var| nodes[v.0].shape.as_slice();
        // Runs `f` on the gradient buffer of `v` when it participates.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let g = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(g);
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
                let nb = nodes[b.0].value.len();
                acc(*b, &mut |g| {
                    for (i, d) in dy.iter().enumerate() {
                        g[i % nb] += d;
                    }
                });
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
                acc(*b, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] * bv[i];
                    }
                });
                acc(*b, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] * av[i];
                    }
                });
            }
            Op::Scale(a, s) => {
                acc(*a, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += s * d));
            }
            Op::MatMul(a, b) => {
                let k = last_dim(shp(*a));
                let n = shp(*b)[1];
                let m = val(*a).len() / k;
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| mm_a_bt_acc(dy, bv, g, m, n, k));
                acc(*b, &mut |g| mm_at_b_acc(av, dy, g, m, k, n));
            }
            Op::Transpose(a) => {
                let (r, c) = (shp(*a)[0], shp(*a)[1]);
                acc(*a, &mut |g| {
                    for i in 0..r {
                        for j in 0..c {
                            g[i * c + j] += dy[j * r + i];
                        }
                    }
                });
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (sa, sb) = (shp(*a), shp(*b));
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *trans_b { sb[1] } else { sb[2] };
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| {
                    for e in 0..batch {
                        let de = &dy[e * m * n..(e + 1) * m * n];
                        let be = &bv[e * k * n..(e + 1) * k * n];
                        let ge = &mut g[e * m * k..(e + 1) * m * k];
                        if *trans_b {
                            mm_acc(de, be, ge, m, n, k);
                        } else {
                            mm_a_bt_acc(de, be, ge, m, n, k);
                        }
                    }
                });
                acc(*b, &mut |g| {
                    for e in 0..batch {
                        let de = &dy[e * m * n..(e + 1) * m * n];
                        let ae = &av[e * m * k..(e + 1) * m * k];
                        let ge = &mut g[e * k * n..(e + 1) * k * n];
                        if *trans_b {
                            mm_at_b_acc(de, ae, ge, m, n, k);
                        } else {
                            mm_at_b_acc(ae, de, ge, m, k, n);
                        }
                    }
                });
            }
            Op::SplitHeads { x, batch, seq, heads } => {
                let d = last_dim(shp(*x));
                let dh = d / heads;
                acc(*x, &mut |g| {
                    for b in 0..*batch {
                        for t in 0..*seq {
                            for h in 0..*heads {
                                let src = (b * seq + t) * d + h * dh;
                                let dst = ((b * heads + h) * seq + t) * dh;
                                for j in 0..dh {
                                    g[src + j] += dy[dst + j];
                                }
                            }
                        }
                    }
                });
            }
            Op::MergeHeads { x, batch, seq, heads } => {
                let dh = last_dim(shp(*x));
                let d = dh * heads;
                acc(*x, &mut |g| {
                    for b in 0..*batch {
                        for t in 0..*seq {
                            for h in 0..*heads {
                                let dst = (b * seq + t) * d + h * dh;
                                let src = ((b * heads + h) * seq + t) * dh;
                                for j in 0..dh {
                                    g[src + j] += dy[dst + j];
                                }
                            }
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                acc(*x, &mut |g| g.iter_mut().zip(dy).for_each(|(g, d)| *g += d));
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let cols = last_dim(&node.shape);
                acc(*x, &mut |g| {
                    for ((gr, yr), dr) in g.chunks_mut(cols).zip(y.chunks(cols)).zip(dy.chunks(cols)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias } => {
                let d = last_dim(shp(*x));
                let (xv, gv) = (val(*x), val(*gain));
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                let mut dx = vec![0.0; xv.len()];
                for ((row, dr), dxr) in xv.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)) {
                    let (_, inv, xhat) = normalize_row(row);
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for j in 0..d {
                        dgain[j] += dr[j] * xhat[j];
                        dbias[j] += dr[j];
                        let dxh = dr[j] * gv[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[j];
                    }
                    mean_dxhat /= d as f64;
                    mean_dxhat_xhat /= d as f64;
                    for j in 0..d {
                        let dxh = dr[j] * gv[j];
                        dxr[j] = inv * (dxh - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                acc(*x, &mut |g| g.iter_mut().zip(&dx).for_each(|(g, d)| *g += d));
                acc(*gain, &mut |g| g.iter_mut().zip(&dgain).for_each(|(g, d)| *g += d));
                acc(*bias, &mut |g| g.iter_mut().zip(&dbias).for_each(|(g, d)| *g += d));
            }
            Op::Gelu(x) => {
                let xv = val(*x);
                acc(*x, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] * gelu_grad(xv[i]);
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = shp(*table)[1];
                acc(*table, &mut |g| {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            g[id * d + j] += dy[r * d + j];
                        }
                    }
                });
            }
            Op::MaskedMean { x, weights, seq } => {
                let d = last_dim(shp(*x));
                acc(*x, &mut |g| {
                    for (pos, &w) in weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let b = pos / seq;
                        for j in 0..d {
                            g[pos * d + j] += w * dy[b * d + j];
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = last_dim(&node.shape);
                let rows = node.value.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = last_dim(shp(p));
                    acc(p, &mut |g| {
                        for r in 0..rows {
                            for j in 0..w {
                                g[r * w + j] += dy[r * total + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::AbsDiff(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let sign = |i: usize| {
                    let diff = av[i] - bv[i];
                    if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] * sign(i);
                    }
                });
                acc(*b, &mut |g| {
                    for i in 0..g.len() {
                        g[i] -= dy[i] * sign(i);
                    }
                });
            }
            Op::Dropout { x, scale } => {
                acc(*x, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += dy[i] * scale[i];
                    }
                });
            }
            Op::GatherRows { x, rows } => {
                let d = last_dim(shp(*x));
                acc(*x, &mut |g| {
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..d {
                            g[r * d + j] += dy[k * d + j];
                        }
                    }
                });
            }
            Op::RowCosine(a, b) => {
                let d = last_dim(shp(*a));
                let (av, bv) = (val(*a), val(*b));
                let rows = node.value.len();
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for r in 0..rows {
                    let u = &av[r * d..(r + 1) * d];
                    let v = &bv[r * d..(r + 1) * d];
                    let nu = norm(u);
                    let nv = norm(v);
                    let c = node.value[r];
                    for j in 0..d {
                        da[r * d + j] = dy[r] * (v[j] / (nu * nv) - c * u[j] / (nu * nu));
                        db[r * d + j] = dy[r] * (u[j] / (nu * nv) - c * v[j] / (nv * nv));
                    }
                }
                acc(*a, &mut |g| g.iter_mut().zip(&da).for_each(|(g, d)| *g += d));
                acc(*b, &mut |g| g.iter_mut().zip(&db).for_each(|(g, d)| *g += d));
            }
            Op::Sum(x) => {
                acc(*x, &mut |g| g.iter_mut().for_each(|g| *g += dy[0]));
            }
            Op::Mean(x) => {
                let n = val(*x).len() as f64;
                acc(*x, &mut |g| g.iter_mut().for_each(|g| *g += dy[0] / n));
            }
            Op::CrossEntropy { logits, targets } => {
                let c = last_dim(shp(*logits));
                let lv = val(*logits);
                let n = targets.len() as f64;
                acc(*logits, &mut |g| {
                    for ((gr, row), &t) in g.chunks_mut(c).zip(lv.chunks(c)).zip(targets) {
                        let lse = log_sum_exp(row);
                        for j in 0..c {
                            let p = (row[j] - lse).exp();
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            gr[j] += dy[0] * (p - onehot) / n;
                        }
                    }
                });
            }
        }
    }
}

fn normalize_row(row: &[f64]) -> (f64, f64, Vec<f64>) {
    let d = row.len() as f64;
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let xhat = row.iter().map(|x| (x - mean) * inv).collect();
    (mean, inv, xhat)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `dot(u, v) / (|u| |v|)`; a zero vector is a numeric error.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dim("cosine_similarity", format!("{} vs {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Numeric("cosine similarity of a zero-norm vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

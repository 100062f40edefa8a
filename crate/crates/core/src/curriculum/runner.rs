use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::plan::{CurriculumPlan, ObjectiveKind, Stage, StageName};
use crate::encoder::{EncoderParams, EncoderVars};
use crate::error::{Error, Result};
use crate::numcore::{clip_gradients, stream, AdamState, Graph, Mode, ParamStore, SeedPurpose, StreamRng, Tensor, Var};
use crate::objectives::{mlm_loss_graph, nli_head, nli_loss_graph, sts_loss_graph, NliExample, StsExample};
use crate::textproc::{apply_mlm_mask_with, encode, MaskConfig, TokenSeq, Vocab};

pub const DEFAULT_CLIP_NORM: f64 = 1.0;

/// Training material for one stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageInput {
    Corpus(Vec<String>),
    Pairs(Vec<StsExample>),
    Nli(Vec<NliExample>),
}

impl StageInput {
    pub fn len(&self) -> usize {
        match self {
            StageInput::Corpus(s) => s.len(),
            StageInput::Pairs(p) => p.len(),
            StageInput::Nli(n) => n.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw sentences, for masked-LM stages. Pair and NLI data contribute
    /// both sides of every record.
    pub fn sentences(&self) -> Vec<&str> {
        match self {
            StageInput::Corpus(s) => s.iter().map(String::as_str).collect(),
            StageInput::Pairs(p) => p
                .iter()
                .flat_map(|r| [r.sentence_a.as_str(), r.sentence_b.as_str()])
                .collect(),
            StageInput::Nli(n) => n
                .iter()
                .flat_map(|r| [r.premise.as_str(), r.hypothesis.as_str()])
                .collect(),
        }
    }

    fn accepts(&self, kind: ObjectiveKind) -> bool {
        matches!(
            (kind, self),
            (ObjectiveKind::Mlm, _) | (ObjectiveKind::Sts, StageInput::Pairs(_)) | (ObjectiveKind::Nli, StageInput::Nli(_))
        )
    }
}

/// Datasets keyed by the stage that consumes them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingData {
    inputs: BTreeMap<StageName, StageInput>,
}

impl TrainingData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, stage: StageName, input: StageInput) -> Self {
        self.inputs.insert(stage, input);
        self
    }

    pub fn insert(&mut self, stage: StageName, input: StageInput) {
        self.inputs.insert(stage, input);
    }

    pub fn get(&self, stage: StageName) -> Option<&StageInput> {
        self.inputs.get(&stage)
    }

    /// Fails on the first stage of `stages` whose data is absent, empty,
    /// or of the wrong kind.
    pub fn check(&self, stages: &[Stage]) -> Result<()> {
        for (i, s) in stages.iter().enumerate() {
            let input = self
                .get(s.name)
                .ok_or_else(|| Error::Config(format!("stage {i} ({}) has no dataset", s.name)))?;
            if !input.accepts(s.kind()) {
                return Err(Error::Config(format!("stage {i} ({}) got a dataset of the wrong kind", s.name)));
            }
            if input.is_empty() {
                return Err(Error::Config(format!("stage {i} ({}) has an empty dataset", s.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub mask: MaskConfig,
    pub clip_norm: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            mask: MaskConfig::default(),
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: StageName,
    pub stage_index: usize,
    pub epoch_losses: Vec<f64>,
    pub first_batch_loss: f64,
    pub steps: u64,
    /// Adam step count at stage end. Equals `steps` since every stage
    /// starts a fresh optimizer.
    pub adam_t: u64,
    /// Global gradient norm of the last step, before clipping.
    pub final_grad_norm: f64,
    pub min_clip_scale: f64,
    pub max_clip_scale: f64,
    pub skipped_batches: usize,
    pub wall_time_secs: f64,
}

impl StageLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("stage log serializes")
    }
}

/// Runs `plan` from its first stage. Stage `i` draws its random streams
/// from `(plan.seed, i)`.
pub fn run_curriculum(
    plan: &CurriculumPlan,
    params: EncoderParams,
    vocab: &Vocab,
    data: &TrainingData,
    options: &TrainOptions,
) -> Result<(EncoderParams, Vec<StageLog>)> {
    run_curriculum_from(plan, 0, params, vocab, data, options, &mut |_, _, _| Ok(()))
}

/// Runs `plan` as if its stages were at positions `first_index..` of a
/// longer plan, calling `on_stage_end` after each stage. Running a plan
/// split in two this way is bit-identical to running it whole.
pub fn run_curriculum_from(
    plan: &CurriculumPlan,
    first_index: usize,
    mut params: EncoderParams,
    vocab: &Vocab,
    data: &TrainingData,
    options: &TrainOptions,
    on_stage_end: &mut dyn FnMut(usize, &EncoderParams, &StageLog) -> Result<()>,
) -> Result<(EncoderParams, Vec<StageLog>)> {
    plan.check()?;
    data.check(&plan.stages)?;
    let mut logs = Vec::with_capacity(plan.len());
    for (offset, stage) in plan.stages.iter().enumerate() {
        let index = first_index + offset;
        let input = data.get(stage.name).expect("checked above");
        let log = run_stage(&mut params, vocab, stage, input, plan.seed, index, options)?;
        log::info!(
            "stage {index} {}: loss {:.4} -> {:.4} over {} steps",
            stage.name,
            log.first_batch_loss,
            log.epoch_losses.last().copied().unwrap_or(f64::NAN),
            log.steps
        );
        on_stage_end(index, &params, &log)?;
        logs.push(log);
    }
    Ok((params, logs))
}

enum Prepared {
    Mlm(Vec<TokenSeq>),
    Sts(Vec<(TokenSeq, TokenSeq, f64)>),
    Nli(Vec<(TokenSeq, TokenSeq, usize)>),
}

impl Prepared {
    fn new(kind: ObjectiveKind, input: &StageInput, vocab: &Vocab, max_len: usize) -> Result<Self> {
        let enc = |s: &str| encode(s, vocab, max_len);
        Ok(match (kind, input) {
            (ObjectiveKind::Mlm, _) => Prepared::Mlm(input.sentences().into_iter().map(enc).collect::<Result<_>>()?),
            (ObjectiveKind::Sts, StageInput::Pairs(p)) => Prepared::Sts(
                p.iter()
                    .map(|r| Ok((enc(&r.sentence_a)?, enc(&r.sentence_b)?, r.gold_score)))
                    .collect::<Result<_>>()?,
            ),
            (ObjectiveKind::Nli, StageInput::Nli(n)) => Prepared::Nli(
                n.iter()
                    .map(|r| Ok((enc(&r.premise)?, enc(&r.hypothesis)?, r.label.index())))
                    .collect::<Result<_>>()?,
            ),
            _ => return Err(Error::Config("dataset kind does not match the stage objective".into())),
        })
    }

    fn len(&self) -> usize {
        match self {
            Prepared::Mlm(s) => s.len(),
            Prepared::Sts(p) => p.len(),
            Prepared::Nli(n) => n.len(),
        }
    }
}

struct Streams {
    shuffle: StreamRng,
    mask: StreamRng,
    dropout: StreamRng,
}

/// One stage: per-epoch shuffle, mini-batches, backward, clipping, and an
/// Adam step per batch. The optimizer (and the NLI head, if any) lives only
/// for the duration of the stage.
pub fn run_stage(
    params: &mut EncoderParams,
    vocab: &Vocab,
    stage: &Stage,
    input: &StageInput,
    seed: u64,
    stage_index: usize,
    options: &TrainOptions,
) -> Result<StageLog> {
    if vocab.len() != params.config.vocab_size {
        return Err(Error::Config(format!(
            "vocab of {} tokens for an encoder sized {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    let started = Instant::now();
    let data = Prepared::new(stage.kind(), input, vocab, params.config.max_len)?;
    if data.len() == 0 {
        return Err(Error::Config(format!("stage {} has an empty dataset", stage.name)));
    }
    let idx = stage_index as u64;
    let mut rng = Streams {
        shuffle: stream(seed, idx, SeedPurpose::Shuffle),
        mask: stream(seed, idx, SeedPurpose::Mask),
        dropout: stream(seed, idx, SeedPurpose::Dropout),
    };
    let mut head = match stage.kind() {
        ObjectiveKind::Nli => nli_head(params.config.hidden),
        _ => ParamStore::new(),
    };
    let mut adam = AdamState::new(params.numel() + head.numel(), stage.lr);
    let precision = params.config.precision;

    let mut log = StageLog {
        stage: stage.name,
        stage_index,
        epoch_losses: Vec::with_capacity(stage.epochs),
        first_batch_loss: f64::NAN,
        steps: 0,
        adam_t: 0,
        final_grad_norm: 0.0,
        min_clip_scale: 1.0,
        max_clip_scale: 1.0,
        skipped_batches: 0,
        wall_time_secs: 0.0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..stage.epochs {
        order.shuffle(&mut rng.shuffle);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(stage.batch_size) {
            params.store.clear_grads();
            head.clear_grads();
            let Some(loss) = batch_gradients(params, &mut head, &data, chunk, vocab, options, &mut rng)? else {
                log.skipped_batches += 1;
                continue;
            };
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("stage {} produced a non-finite loss", stage.name)));
            }
            let mut tensors: Vec<&mut Tensor> = params.store.tensors_mut();
            tensors.extend(head.tensors_mut());
            let norm = crate::numcore::global_grad_norm(&tensors)?;
            let scale = clip_gradients(&mut tensors, options.clip_norm)?;
            adam.step(&mut tensors, precision)?;

            if log.steps == 0 {
                log.first_batch_loss = loss;
                log.min_clip_scale = scale;
                log.max_clip_scale = scale;
            }
            log.min_clip_scale = log.min_clip_scale.min(scale);
            log.max_clip_scale = log.max_clip_scale.max(scale);
            log.final_grad_norm = norm;
            log.steps += 1;
            total += loss;
            batches += 1;
        }
        log.epoch_losses.push(if batches == 0 { f64::NAN } else { total / batches as f64 });
    }
    params.store.clear_grads();
    if !params.store.is_finite() {
        return Err(Error::Numeric(format!("stage {} left non-finite parameters", stage.name)));
    }
    log.adam_t = adam.t;
    log.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(log)
}

/// Loss of one mini-batch, with gradients left on `params` and `head`.
/// `None` when the batch has nothing to learn from.
fn batch_gradients(
    params: &mut EncoderParams,
    head: &mut ParamStore,
    data: &Prepared,
    chunk: &[usize],
    vocab: &Vocab,
    options: &TrainOptions,
    rng: &mut Streams,
) -> Result<Option<f64>> {
    let mut g = Graph::new();
    let vars = EncoderVars::register(&mut g, params);
    let head_vars: Vec<Var> = g.params(head);
    let mut mode = Mode::Training(&mut rng.dropout);
    let loss = match data {
        Prepared::Mlm(seqs) => {
            let batch: Vec<TokenSeq> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let masked = apply_mlm_mask_with(&batch, options.mask, vocab.len(), &mut rng.mask)?;
            if masked.targets.is_empty() {
                return Ok(None);
            }
            mlm_loss_graph(&mut g, &vars, params, &masked, &mut mode)?
        }
        Prepared::Sts(pairs) => {
            let a: Vec<TokenSeq> = chunk.iter().map(|&i| pairs[i].0.clone()).collect();
            let b: Vec<TokenSeq> = chunk.iter().map(|&i| pairs[i].1.clone()).collect();
            let gold: Vec<f64> = chunk.iter().map(|&i| pairs[i].2).collect();
            sts_loss_graph(&mut g, &vars, params, &a, &b, &gold, &mut mode)?
        }
        Prepared::Nli(rows) => {
            let p: Vec<TokenSeq> = chunk.iter().map(|&i| rows[i].0.clone()).collect();
            let h: Vec<TokenSeq> = chunk.iter().map(|&i| rows[i].1.clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| rows[i].2).collect();
            nli_loss_graph(&mut g, &vars, params, head_vars[0], &p, &h, &labels, &mut mode)?
        }
    };
    let value = g.scalar(loss)?;
    let grads = g.backward(loss)?;
    grads.accumulate_into(&mut params.store, &vars.0)?;
    grads.accumulate_into(head, &head_vars)?;
    Ok(Some(value))
}

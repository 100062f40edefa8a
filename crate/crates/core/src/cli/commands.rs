use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use crate::curriculum::{
    run_curriculum_from, CurriculumPlan, ObjectiveKind, StageInput, StageLog, StageName, TrainingData,
};
use crate::datasets::{load_corpus, load_nli, load_pairs, synth_generate, PairDataset, SynthSpec};
use crate::encoder::{Checkpoint, EncoderParams, RunMetadata};
use crate::error::{Error, Result};
use crate::evalkit::{kfold_eval_trained, sample_efficiency_sweep_trained, EvalReport, SweepResult};
use crate::io::{read_to_string, sha256_hex, write_atomic};
use crate::numcore::{cosine_similarity, stream, SeedPurpose};
use crate::objectives::MAX_SCORE;
use crate::textproc::Vocab;
use crate::encoder::embed_sentence;

fn plan_value(plan: &CurriculumPlan) -> serde_json::Value {
    serde_json::to_value(&plan.stages).expect("stages serialize")
}

fn metadata(config: &RunConfig, plan: &CurriculumPlan) -> RunMetadata {
    RunMetadata::new(config.hash(), config.seed, plan_value(plan))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn echo_config(config: &RunConfig) -> Result<()> {
    write_json(&config.output_dir.join("effective_config.json"), config)
}

/// The plan named by the config, or the empty plan.
pub fn load_plan(config: &RunConfig) -> Result<CurriculumPlan> {
    match &config.plan {
        Some(path) => CurriculumPlan::from_json(&read_to_string(path)?, config.seed)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        None => Ok(CurriculumPlan::default().with_seed(config.seed)),
    }
}

fn corpus_paths(config: &RunConfig) -> Vec<(&'static str, &Path)> {
    let mut out = Vec::new();
    let fields = [
        ("domain_corpus", &config.domain_corpus),
        ("target_corpus", &config.target_corpus),
        ("target_pairs", &config.target_pairs),
        ("source_pairs", &config.source_pairs),
        ("nli", &config.nli),
        ("source_corpus", &config.source_corpus),
    ];
    for (name, path) in fields {
        if let Some(p) = path {
            out.push((name, p.as_path()));
        }
    }
    out
}

fn sentences_of(field: &str, path: &Path) -> Result<Vec<String>> {
    Ok(match field {
        "target_pairs" | "source_pairs" => load_pairs(path)?.sentences(),
        "nli" => load_nli(path)?
            .records
            .into_iter()
            .flat_map(|r| [r.premise, r.hypothesis])
            .collect(),
        _ => load_corpus(path)?.sentences,
    })
}

/// Builds the vocabulary over every configured corpus and writes it.
pub fn cmd_vocab(config: &RunConfig, out: Option<&Path>) -> Result<(Vocab, PathBuf)> {
    let paths = corpus_paths(config);
    if paths.is_empty() {
        return Err(Error::Usage("no corpus configured; set at least one dataset path".into()));
    }
    let mut sentences = Vec::new();
    for (field, path) in paths {
        sentences.extend(sentences_of(field, path)?);
    }
    let vocab = Vocab::build(&sentences, config.min_freq, config.max_vocab)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| config.vocab_path());
    write_atomic(&path, vocab.to_file_string().as_bytes())?;
    log::info!("wrote {} tokens to {}", vocab.len(), path.display());
    Ok((vocab, path))
}

/// Loads the configured vocabulary, building it first if the file is absent.
pub fn load_or_build_vocab(config: &RunConfig) -> Result<Vocab> {
    let path = config.vocab_path();
    if path.exists() {
        Vocab::load(&path)
    } else {
        log::info!("{} not found; building it", path.display());
        Ok(cmd_vocab(config, None)?.0)
    }
}

/// Resolves and loads the data each stage of `plan` trains on.
pub fn load_training_data(config: &RunConfig, plan: &CurriculumPlan) -> Result<TrainingData> {
    let mut data = TrainingData::new();
    for (i, stage) in plan.stages.iter().enumerate() {
        let path = stage
            .dataset
            .as_deref()
            .or_else(|| config.dataset_for(stage.name))
            .ok_or_else(|| {
                Error::Config(format!(
                    "stage {i} ({}) has no dataset; set `{}` or the stage's `dataset`",
                    stage.name,
                    RunConfig::field_for(stage.name)
                ))
            })?;
        let is_pairs = config.target_pairs.as_deref() == Some(path) || config.source_pairs.as_deref() == Some(path);
        let is_nli = config.nli.as_deref() == Some(path);
        let input = match stage.kind() {
            ObjectiveKind::Sts => StageInput::Pairs(load_pairs(path)?.records),
            ObjectiveKind::Nli => StageInput::Nli(load_nli(path)?.records),
            ObjectiveKind::Mlm if is_pairs => StageInput::Pairs(load_pairs(path)?.records),
            ObjectiveKind::Mlm if is_nli => StageInput::Nli(load_nli(path)?.records),
            ObjectiveKind::Mlm => StageInput::Corpus(load_corpus(path)?.sentences),
        };
        data.insert(stage.name, input);
    }
    data.check(&plan.stages)?;
    Ok(data)
}

fn input_digest(input: &StageInput) -> String {
    let text = match input {
        StageInput::Pairs(p) => serde_json::to_string(p),
        StageInput::Nli(n) => serde_json::to_string(n),
        StageInput::Corpus(c) => serde_json::to_string(c),
    }
    .expect("inputs serialize");
    sha256_hex(text.as_bytes())
}

/// Identity of the parameters after the first `len` stages of `plan`:
/// everything that determines them, and nothing else.
pub fn prefix_hash(config: &RunConfig, vocab: &Vocab, plan: &CurriculumPlan, data: &TrainingData, len: usize) -> String {
    let stages = &plan.stages[..len];
    let digests: Vec<String> = stages
        .iter()
        .map(|s| data.get(s.name).map(input_digest).unwrap_or_default())
        .collect();
    let key = serde_json::json!({
        "encoder": config.encoder,
        "vocab": vocab.hash(),
        "seed": config.seed,
        "mask_rate": config.mask_rate,
        "mask_scheme": config.mask_scheme,
        "clip_norm": config.clip_norm,
        "stages": stages,
        "data": digests,
    });
    sha256_hex(key.to_string().as_bytes())
}

pub fn stage_checkpoint_path(dir: &Path, hash: &str, stage: StageName) -> PathBuf {
    dir.join("checkpoints").join(format!("{}-{}.ckpt", &hash[..16], stage))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub stage_checkpoints: Vec<PathBuf>,
    pub logs: Vec<StageLog>,
    /// Number of leading stages restored from existing checkpoints.
    pub reused_stages: usize,
}

#[derive(Serialize)]
struct LogLine<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    log: &'a StageLog,
}

/// Initializes the encoder and runs the plan, writing a checkpoint after
/// every stage and a final one. With `reuse`, the longest plan prefix that
/// already has a checkpoint is loaded instead of retrained.
pub fn cmd_train(config: &RunConfig, plan: &CurriculumPlan, reuse: bool) -> Result<TrainOutcome> {
    plan.check()?;
    let vocab = load_or_build_vocab(config)?;
    let data = load_training_data(config, plan)?;
    let encoder = config.encoder.config(vocab.len())?;
    echo_config(config)?;
    let out = &config.output_dir;
    let hashes: Vec<String> = (1..=plan.len()).map(|n| prefix_hash(config, &vocab, plan, &data, n)).collect();
    let paths: Vec<PathBuf> = plan
        .stages
        .iter()
        .zip(&hashes)
        .map(|(s, h)| stage_checkpoint_path(out, h, s.name))
        .collect();

    let mut start = 0;
    let mut params = EncoderParams::init(&encoder, &mut stream(config.seed, 0, SeedPurpose::Init))?;
    if reuse {
        if let Some(n) = (1..=plan.len()).rev().find(|&n| paths[n - 1].exists()) {
            let ck = Checkpoint::load(&paths[n - 1])?;
            if ck.vocab.hash() != vocab.hash() || ck.params.config != encoder {
                return Err(Error::Integrity(format!(
                    "{} does not match this configuration",
                    paths[n - 1].display()
                )));
            }
            log::info!("reusing {} for the first {n} stage(s)", paths[n - 1].display());
            params = ck.params;
            start = n;
        }
    }
    let rest = CurriculumPlan {
        stages: plan.stages[start..].to_vec(),
        seed: plan.seed,
    };
    let config_hash = config.hash();
    let mut lines = String::new();
    let (params, logs) = run_curriculum_from(
        &rest,
        start,
        params,
        &vocab,
        &data,
        &config.train_options(),
        &mut |index, params, log| {
            let prefix = CurriculumPlan {
                stages: plan.stages[..=index].to_vec(),
                seed: plan.seed,
            };
            let ck = Checkpoint::new(params.clone(), vocab.clone(), metadata(config, &prefix))?;
            ck.save(&paths[index])?;
            lines.push_str(&serde_json::to_string(&LogLine {
                config_hash: &config_hash,
                seed: config.seed,
                log,
            })?);
            lines.push('\n');
            Ok(())
        },
    )?;
    write_atomic(&out.join("stage_logs.jsonl"), lines.as_bytes())?;
    let final_checkpoint = out.join("final.ckpt");
    Checkpoint::new(params, vocab, metadata(config, plan))?.save(&final_checkpoint)?;
    Ok(TrainOutcome {
        final_checkpoint,
        stage_checkpoints: paths,
        logs,
        reused_stages: start,
    })
}

/// Loads a checkpoint and confirms it was built with the configured vocabulary.
pub fn load_checkpoint(config: &RunConfig, path: &Path) -> Result<(Checkpoint, CurriculumPlan)> {
    let ck = Checkpoint::load(path)?;
    let vocab_path = config.vocab_path();
    if vocab_path.exists() {
        let configured = Vocab::load(&vocab_path)?;
        if configured.hash() != ck.vocab.hash() {
            return Err(Error::Integrity(format!(
                "{} was trained with a different vocabulary than {}",
                path.display(),
                vocab_path.display()
            )));
        }
    }
    let stages = serde_json::from_value(ck.metadata.plan.clone())
        .map_err(|e| Error::Integrity(format!("{}: unreadable plan metadata: {e}", path.display())))?;
    let plan = CurriculumPlan {
        stages,
        seed: ck.metadata.seed,
    };
    Ok((ck, plan))
}

fn target_pairs(config: &RunConfig, pairs: Option<&Path>) -> Result<PairDataset> {
    let path = pairs
        .or(config.target_pairs.as_deref())
        .ok_or_else(|| Error::Usage("no evaluation pairs; pass --pairs or set target_pairs".into()))?;
    load_pairs(path)
}

/// The checkpoint's plan followed, in supervised mode, by `STS_tgt`.
fn eval_plan(config: &RunConfig, trained: &CurriculumPlan, supervised: bool) -> CurriculumPlan {
    let mut plan = trained.clone().with_seed(config.seed);
    if supervised {
        plan.stages.push(config.finetune.stage());
    }
    plan
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub pairs: Option<PathBuf>,
    pub supervised: bool,
    pub report: Option<PathBuf>,
}

/// k-fold evaluation of a trained checkpoint.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, args: &EvalArgs) -> Result<(EvalReport, PathBuf)> {
    let (ck, trained) = load_checkpoint(config, checkpoint)?;
    let pairs = target_pairs(config, args.pairs.as_deref())?;
    let plan = eval_plan(config, &trained, args.supervised);
    let mut report = kfold_eval_trained(
        &pairs.records,
        &ck.params,
        &ck.vocab,
        &plan,
        &config.eval_options(args.supervised),
    )?;
    report.metadata = Some(metadata(config, &plan));
    let path = args
        .report
        .clone()
        .unwrap_or_else(|| config.output_dir.join("eval_report.json"));
    echo_config(config)?;
    write_json(&path, &report)?;
    Ok((report, path))
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub checkpoint: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

/// Sample-efficiency sweep over the standard ratio grid. Without a
/// checkpoint, the configured plan (minus `STS_tgt`) is trained first.
pub fn cmd_sweep(config: &RunConfig, args: &SweepArgs) -> Result<(SweepResult, PathBuf, PathBuf)> {
    let pairs = target_pairs(config, args.pairs.as_deref())?;
    let (params, vocab, trained) = match &args.checkpoint {
        Some(path) => {
            let (ck, plan) = load_checkpoint(config, path)?;
            (ck.params, ck.vocab, plan)
        }
        None => {
            let (prefix, _) = load_plan(config)?.split_target();
            let outcome = cmd_train(config, &prefix, true)?;
            let ck = Checkpoint::load(&outcome.final_checkpoint)?;
            (ck.params, ck.vocab, prefix)
        }
    };
    let plan = eval_plan(config, &trained, true);
    let options = config.eval_options(true);
    let ratios = crate::evalkit::default_ratios();
    let mut result = sample_efficiency_sweep_trained(&pairs.records, &params, &vocab, &plan, &ratios, &options)?;
    if let Some(base) = &args.baseline {
        let (ck, base_plan) = load_checkpoint(config, base)?;
        let base_plan = eval_plan(config, &base_plan, true);
        result.baseline_spearman = kfold_eval_trained(&pairs.records, &ck.params, &ck.vocab, &base_plan, &options)?.spearman_rho;
    }
    result.metadata = Some(metadata(config, &plan));
    echo_config(config)?;
    let json = config.output_dir.join("sweep.json");
    let csv = config.output_dir.join("sweep.csv");
    write_json(&json, &result)?;
    write_atomic(&csv, result.to_csv().as_bytes())?;
    Ok((result, json, csv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub cosine: f64,
    /// `5 · max(cosine, 0)`.
    pub score: f64,
}

pub fn display_score(cosine: f64) -> f64 {
    MAX_SCORE * cosine.max(0.0)
}

pub fn cmd_score(checkpoint: &Path, sentence_a: &str, sentence_b: &str) -> Result<Score> {
    let ck = Checkpoint::load(checkpoint)?;
    let u = embed_sentence(&ck.params, &ck.vocab, sentence_a)?;
    let v = embed_sentence(&ck.params, &ck.vocab, sentence_b)?;
    let cosine = cosine_similarity(&u, &v)?;
    Ok(Score {
        cosine,
        score: display_score(cosine),
    })
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub domain_corpus: PathBuf,
    pub target_corpus: PathBuf,
    pub source_pairs: PathBuf,
    pub target_pairs: PathBuf,
    pub config: PathBuf,
}

/// Writes a synthetic dataset and a run config that points at it.
pub fn cmd_synth(spec: &SynthSpec, dir: &Path) -> Result<SynthOutcome> {
    let data = synth_generate(spec)?;
    let out = SynthOutcome {
        domain_corpus: dir.join("domain.txt"),
        target_corpus: dir.join("target.txt"),
        source_pairs: dir.join("source_pairs.tsv"),
        target_pairs: dir.join("target_pairs.tsv"),
        config: dir.join("config.json"),
    };
    write_atomic(&out.domain_corpus, data.domain_corpus.to_text().as_bytes())?;
    write_atomic(&out.target_corpus, data.target_corpus.to_text().as_bytes())?;
    write_atomic(&out.source_pairs, data.source_pairs.to_tsv().as_bytes())?;
    write_atomic(&out.target_pairs, data.target_pairs.to_tsv().as_bytes())?;
    write_json(&dir.join("spec.json"), spec)?;
    // File names only: `RunConfig::load` resolves them against `dir`.
    let config = RunConfig {
        domain_corpus: Some("domain.txt".into()),
        target_corpus: Some("target.txt".into()),
        source_pairs: Some("source_pairs.tsv".into()),
        target_pairs: Some("target_pairs.tsv".into()),
        vocab: Some("vocab.txt".into()),
        seed: spec.seed,
        ..RunConfig::default()
    };
    write_json(&out.config, &config)?;
    Ok(out)
}

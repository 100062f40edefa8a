use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{pearson, spearman};
use crate::curriculum::{run_curriculum, run_stage, CurriculumPlan, Stage, StageInput, StageName, TrainOptions, TrainingData};
use crate::encoder::{embed_texts, EncoderParams, RunMetadata};
use crate::error::{Error, Result};
use crate::numcore::{cosine_similarity, derive_seed, stream, SeedPurpose};
use crate::objectives::StsExample;
use crate::textproc::Vocab;

pub const DEFAULT_FOLDS: usize = 10;
pub const REPORT_VERSION: u32 = 1;
const SCORE_BATCH: usize = 64;

/// Inference-mode cosine of the pooled embeddings of each pair.
pub fn score_pairs(params: &EncoderParams, vocab: &Vocab, pairs: &[StsExample]) -> Result<Vec<f64>> {
    let a: Vec<&str> = pairs.iter().map(|p| p.sentence_a.as_str()).collect();
    let b: Vec<&str> = pairs.iter().map(|p| p.sentence_b.as_str()).collect();
    let ea = embed_texts(params, vocab, &a, SCORE_BATCH)?;
    let eb = embed_texts(params, vocab, &b, SCORE_BATCH)?;
    ea.iter().zip(&eb).map(|(u, v)| cosine_similarity(u, v)).collect()
}

/// Shuffles `0..n` with the fold stream of `seed` and cuts it into `k`
/// contiguous folds. The first `n % k` folds hold one extra index.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} pairs cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, 0, SeedPurpose::Folds));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Held-out indices of fold `f` and the training indices of every other
/// fold, in fold order.
pub fn split(folds: &[Vec<usize>], f: usize) -> (Vec<usize>, Vec<usize>) {
    let train = folds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != f)
        .flat_map(|(_, fold)| fold.iter().copied())
        .collect();
    (folds[f].clone(), train)
}

/// Every index in `0..n` is held out exactly once and never trains the
/// model it is scored by.
pub fn check_partition(folds: &[Vec<usize>], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for fold in folds {
        for &i in fold {
            if i >= n || seen[i] {
                return Err(Error::Contract(format!("index {i} is held out twice or out of range")));
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Contract("folds do not cover every pair".into()));
    }
    for f in 0..folds.len() {
        let (test, train) = split(folds, f);
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        if train.iter().any(|&i| in_test[i]) || train.len() + test.len() != n {
            return Err(Error::Contract(format!("fold {f} trains on its held-out pairs")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub supervised: bool,
    pub seed: u64,
    pub train: TrainOptions,
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: DEFAULT_FOLDS,
            supervised: false,
            seed: crate::curriculum::DEFAULT_SEED,
            train: TrainOptions::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// Why the fold was left out of the means.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub plan: String,
    pub stages: Vec<Stage>,
    pub supervised: bool,
    pub k: usize,
    pub seed: u64,
    pub n_pairs: usize,
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub per_fold: Vec<FoldReport>,
    pub excluded_folds: Vec<usize>,
    #[serde(default)]
    pub metadata: Option<RunMetadata>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Means over the folds that produced both metrics.
pub(crate) fn fold_means(folds: &[FoldReport]) -> (Option<f64>, Option<f64>, Vec<usize>) {
    let kept: Vec<&FoldReport> = folds.iter().filter(|f| f.excluded.is_none()).collect();
    let excluded = folds.iter().filter(|f| f.excluded.is_some()).map(|f| f.fold).collect();
    if kept.is_empty() {
        return (None, None, excluded);
    }
    let n = kept.len() as f64;
    let r = kept.iter().filter_map(|f| f.pearson).sum::<f64>() / n;
    let rho = kept.iter().filter_map(|f| f.spearman).sum::<f64>() / n;
    (Some(r), Some(rho), excluded)
}

/// Plan split into the part trained once and the per-fold fine-tuning
/// stage, checked against the evaluation setting.
pub(crate) fn resolve_plan(plan: &CurriculumPlan, supervised: bool) -> Result<(CurriculumPlan, Option<Stage>)> {
    plan.check()?;
    let (prefix, target) = plan.split_target();
    match (supervised, target) {
        (false, Some(_)) => Err(Error::Config(format!(
            "plan {} ends in STS_tgt, which needs supervised evaluation",
            plan.id()
        ))),
        (false, None) => Ok((prefix, None)),
        (true, t) => Ok((prefix, Some(t.unwrap_or_else(|| Stage::new(StageName::StsTgt))))),
    }
}

/// One fold of one evaluation: optionally fine-tunes a copy of `trained` on
/// the first `keep` training pairs, then scores the held-out fold.
pub(crate) struct FoldJob<'a> {
    pub pairs: &'a [StsExample],
    pub trained: &'a EncoderParams,
    pub vocab: &'a Vocab,
    pub finetune: Option<(&'a Stage, usize)>,
    pub seed: u64,
    pub train_options: &'a TrainOptions,
}

impl FoldJob<'_> {
    pub fn run(&self, fold: usize, test: &[usize], train: &[usize], keep: usize) -> Result<FoldReport> {
        let train = &train[..keep.min(train.len())];
        let tuned;
        let params = match self.finetune {
            Some((stage, index)) => {
                let mut p = self.trained.clone();
                let input = StageInput::Pairs(train.iter().map(|&i| self.pairs[i].clone()).collect());
                let fold_seed = derive_seed(self.seed, fold as u64, SeedPurpose::Fold);
                run_stage(&mut p, self.vocab, stage, &input, fold_seed, index, self.train_options)?;
                tuned = p;
                &tuned
            }
            None => self.trained,
        };
        let held: Vec<StsExample> = test.iter().map(|&i| self.pairs[i].clone()).collect();
        let predicted = score_pairs(params, self.vocab, &held)?;
        let gold: Vec<f64> = held.iter().map(|p| p.gold_score).collect();
        let mut report = FoldReport {
            fold,
            n_train: if self.finetune.is_some() { train.len() } else { 0 },
            n_test: held.len(),
            pearson: None,
            spearman: None,
            excluded: None,
        };
        let constant = |xs: &[f64]| xs.iter().all(|&x| x == xs[0]);
        if held.len() < 2 {
            report.excluded = Some("fewer than 2 held-out pairs".into());
        } else if constant(&gold) {
            report.excluded = Some("constant gold scores".into());
        } else if constant(&predicted) {
            report.excluded = Some("constant predictions".into());
        } else {
            report.pearson = Some(pearson(&predicted, &gold)?);
            report.spearman = Some(spearman(&predicted, &gold)?);
        }
        if let Some(why) = &report.excluded {
            log::warn!("fold {fold} excluded: {why}");
        }
        Ok(report)
    }
}

pub(crate) fn map_jobs<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Runs the plan (minus any trailing `STS_tgt`) once on `base`, then
/// evaluates it by k-fold cross-validation on `pairs`.
pub fn kfold_eval(
    pairs: &[StsExample],
    base: EncoderParams,
    vocab: &Vocab,
    plan: &CurriculumPlan,
    data: &TrainingData,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let (prefix, _) = resolve_plan(plan, options.supervised)?;
    let (trained, _) = run_curriculum(&prefix, base, vocab, data, &options.train)?;
    kfold_eval_trained(pairs, &trained, vocab, plan, options)
}

/// k-fold evaluation of parameters that have already been through every
/// stage of `plan` except a trailing `STS_tgt`. In supervised mode each
/// fold fine-tunes its own copy with that stage, at stage index
/// `prefix length` and a fold-derived seed.
pub fn kfold_eval_trained(
    pairs: &[StsExample],
    trained: &EncoderParams,
    vocab: &Vocab,
    plan: &CurriculumPlan,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let (prefix, target) = resolve_plan(plan, options.supervised)?;
    let folds = fold_assignment(pairs.len(), options.k, options.seed)?;
    check_partition(&folds, pairs.len())?;
    let job = FoldJob {
        pairs,
        trained,
        vocab,
        finetune: target.as_ref().map(|s| (s, prefix.len())),
        seed: options.seed,
        train_options: &options.train,
    };
    let per_fold = map_jobs(folds.len(), options.parallel, |f| {
        let (test, train) = split(&folds, f);
        job.run(f, &test, &train, train.len())
    })?;
    let (pearson_r, spearman_rho, excluded_folds) = fold_means(&per_fold);
    let mut stages = prefix.stages.clone();
    stages.extend(target);
    let full = CurriculumPlan { stages, seed: plan.seed };
    Ok(EvalReport {
        format_version: REPORT_VERSION,
        plan: full.id(),
        stages: full.stages,
        supervised: options.supervised,
        k: options.k,
        seed: options.seed,
        n_pairs: pairs.len(),
        pearson_r,
        spearman_rho,
        per_fold,
        excluded_folds,
        metadata: None,
    })
}

use serde::{Deserialize, Serialize};

use super::kfold::{
    check_partition, fold_assignment, fold_means, map_jobs, resolve_plan, split, EvalOptions, FoldJob, FoldReport,
    REPORT_VERSION,
};
use crate::curriculum::{run_curriculum, CurriculumPlan, TrainingData};
use crate::encoder::{EncoderParams, RunMetadata};
use crate::error::{Error, Result};
use crate::objectives::StsExample;
use crate::textproc::Vocab;

/// `0.1, 0.2, …, 1.0`.
pub fn default_ratios() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Number of training pairs kept at `ratio`.
pub fn subset_size(ratio: f64, n_train: usize) -> usize {
    ((ratio * n_train as f64 + 1e-9).floor() as usize).min(n_train)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub skipped: bool,
    pub per_fold: Vec<FoldReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub format_version: u32,
    pub plan: String,
    pub k: usize,
    pub seed: u64,
    pub n_pairs: usize,
    pub points: Vec<SweepPoint>,
    /// Reference line: supervised ρ of a baseline model, when one was given.
    pub baseline_spearman: Option<f64>,
    #[serde(default)]
    pub metadata: Option<RunMetadata>,
}

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    /// `ratio,pearson,spearman` with shortest round-trip float formatting.
    /// Skipped points have empty metric fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,pearson,spearman\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.ratio, csv_field(p.pearson), csv_field(p.spearman)));
        }
        out
    }
}

pub type CsvRow = (f64, Option<f64>, Option<f64>);

pub fn parse_sweep_csv(text: &str) -> Result<Vec<CsvRow>> {
    let bad = |line: usize, m: &str| Error::Validation {
        path: "sweep.csv".into(),
        line,
        message: m.to_string(),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "ratio,pearson,spearman")) => {}
        _ => return Err(bad(1, "missing header")),
    }
    let opt = |s: &str, no| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(no, "bad number"))
        }
    };
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let no = i + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(bad(no, "expected 3 fields"));
            }
            Ok((f[0].parse().map_err(|_| bad(no, "bad ratio"))?, opt(f[1], no)?, opt(f[2], no)?))
        })
        .collect()
}

/// Runs the plan prefix once, then sweeps the `STS_tgt` training fraction.
pub fn sample_efficiency_sweep(
    pairs: &[StsExample],
    base: EncoderParams,
    vocab: &Vocab,
    plan: &CurriculumPlan,
    data: &TrainingData,
    ratios: &[f64],
    options: &EvalOptions,
) -> Result<SweepResult> {
    let (prefix, _) = resolve_plan(plan, true)?;
    let (trained, _) = run_curriculum(&prefix, base, vocab, data, &options.train)?;
    sample_efficiency_sweep_trained(pairs, &trained, vocab, plan, ratios, options)
}

/// For each ratio, every fold fine-tunes on the first `⌊ratio · n_train⌋`
/// pairs of its training split, so subsets are nested across ratios. The
/// ratio-1.0 point is the supervised k-fold evaluation.
pub fn sample_efficiency_sweep_trained(
    pairs: &[StsExample],
    trained: &EncoderParams,
    vocab: &Vocab,
    plan: &CurriculumPlan,
    ratios: &[f64],
    options: &EvalOptions,
) -> Result<SweepResult> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(Error::Config(format!("sweep ratios {ratios:?} must lie in (0, 1]")));
    }
    if ratios.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep ratios must be strictly ascending".into()));
    }
    let (prefix, target) = resolve_plan(plan, true)?;
    let target = target.expect("supervised plans always fine-tune");
    let folds = fold_assignment(pairs.len(), options.k, options.seed)?;
    check_partition(&folds, pairs.len())?;
    let job = FoldJob {
        pairs,
        trained,
        vocab,
        finetune: Some((&target, prefix.len())),
        seed: options.seed,
        train_options: &options.train,
    };
    let k = folds.len();
    let skipped: Vec<bool> = ratios
        .iter()
        .map(|&r| (0..k).any(|f| subset_size(r, pairs.len() - folds[f].len()) == 0))
        .collect();
    let live: Vec<usize> = (0..ratios.len()).filter(|&i| !skipped[i]).collect();
    let results = map_jobs(live.len() * k, options.parallel, |j| {
        let (point, f) = (live[j / k], j % k);
        let (test, train) = split(&folds, f);
        job.run(f, &test, &train, subset_size(ratios[point], train.len()))
    })?;
    let mut by_point = results.chunks(k);
    let points = ratios
        .iter()
        .zip(&skipped)
        .map(|(&ratio, &skip)| {
            if skip {
                log::warn!("sweep ratio {ratio} leaves a fold with no training pairs; skipped");
                return SweepPoint {
                    ratio,
                    pearson: None,
                    spearman: None,
                    skipped: true,
                    per_fold: Vec::new(),
                };
            }
            let per_fold = by_point.next().expect("one chunk per live point").to_vec();
            let (pearson, spearman, _) = fold_means(&per_fold);
            SweepPoint {
                ratio,
                pearson,
                spearman,
                skipped: false,
                per_fold,
            }
        })
        .collect();
    let mut stages = prefix.stages.clone();
    stages.push(target);
    Ok(SweepResult {
        format_version: REPORT_VERSION,
        plan: CurriculumPlan::new(stages).id(),
        k: options.k,
        seed: options.seed,
        n_pairs: pairs.len(),
        points,
        baseline_spearman: None,
        metadata: None,
    })
}

mod common;

use argsim::curriculum::{CurriculumPlan, Stage, StageInput, StageName, TrainingData};
use argsim::encoder::embed_sentence;
use argsim::evalkit::{
    check_partition, fold_assignment, kfold_eval, kfold_eval_trained, sample_efficiency_sweep_trained, score_pairs, split,
    subset_size, EvalOptions,
};
use argsim::objectives::StsExample;
use argsim::Error;
use common::{oracle_spearman, toy_params, toy_vocab, TOY_SENTENCES};

fn all_pairs(gold: impl Fn(usize, usize) -> f64) -> Vec<StsExample> {
    let s = TOY_SENTENCES;
    let mut out = Vec::new();
    for i in 0..s.len() {
        for j in 0..s.len() {
            if i != j {
                out.push(StsExample {
                    sentence_a: s[i].into(),
                    sentence_b: s[j].into(),
                    gold_score: gold(i, j),
                });
            }
        }
    }
    out
}

fn options(k: usize, supervised: bool) -> EvalOptions {
    EvalOptions {
        k,
        supervised,
        ..EvalOptions::default()
    }
}

fn sts_plan() -> CurriculumPlan {
    CurriculumPlan::new(vec![Stage::new(StageName::StsTgt).with_epochs(2).with_batch_size(4).with_lr(1e-3)])
}

#[test]
fn scores_match_hand_computed_cosines() {
    let vocab = toy_vocab();
    let params = toy_params(&vocab, 8);
    let pairs = all_pairs(|i, j| ((i * j) % 6) as f64);
    let scores = score_pairs(&params, &vocab, &pairs).unwrap();
    assert_eq!(scores.len(), pairs.len());
    for (p, s) in pairs.iter().zip(&scores) {
        let u = embed_sentence(&params, &vocab, &p.sentence_a).unwrap();
        let v = embed_sentence(&params, &vocab, &p.sentence_b).unwrap();
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((s - dot / (norm(&u) * norm(&v))).abs() < 1e-12);
    }
    let same = StsExample {
        sentence_a: TOY_SENTENCES[2].into(),
        sentence_b: TOY_SENTENCES[2].into(),
        gold_score: 5.0,
    };
    assert!((score_pairs(&params, &vocab, &[same]).unwrap()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn folds_partition_the_pairs() {
    for (n, k) in [(30, 10), (31, 10), (7, 3), (6000, 10)] {
        let folds = fold_assignment(n, k, 42).unwrap();
        check_partition(&folds, n).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]) && sizes[0] - sizes[k - 1] <= 1);
        let (test, train) = split(&folds, 1);
        assert_eq!(test.len() + train.len(), n);
    }
    assert_ne!(fold_assignment(50, 5, 1).unwrap(), fold_assignment(50, 5, 2).unwrap());
    assert!(matches!(fold_assignment(3, 10, 42), Err(Error::Config(_))));
    assert!(matches!(fold_assignment(30, 1, 42), Err(Error::Config(_))));
}

#[test]
fn unsupervised_report_averages_per_fold_metrics() {
    let vocab = toy_vocab();
    let pairs = all_pairs(|i, j| ((i + 3 * j) % 6) as f64);
    let params = toy_params(&vocab, 9);
    let report = kfold_eval_trained(&pairs, &params, &vocab, &CurriculumPlan::default(), &options(3, false)).unwrap();
    assert_eq!(report.plan, "identity");
    assert_eq!(report.per_fold.len(), 3);
    let scores = score_pairs(&params, &vocab, &pairs).unwrap();
    let folds = fold_assignment(pairs.len(), 3, 42).unwrap();
    let mut rhos = Vec::new();
    for (f, fold) in folds.iter().enumerate() {
        let p: Vec<f64> = fold.iter().map(|&i| scores[i]).collect();
        let g: Vec<f64> = fold.iter().map(|&i| pairs[i].gold_score).collect();
        let rho = oracle_spearman(&p, &g);
        assert!((report.per_fold[f].spearman.unwrap() - rho).abs() < 1e-12);
        rhos.push(rho);
    }
    let mean = rhos.iter().sum::<f64>() / 3.0;
    assert!((report.spearman_rho.unwrap() - mean).abs() < 1e-12);
}

#[test]
fn constant_gold_folds_are_excluded() {
    let vocab = toy_vocab();
    let mut pairs = all_pairs(|i, j| ((i + j) % 6) as f64);
    let folds = fold_assignment(pairs.len(), 3, 42).unwrap();
    for &i in &folds[0] {
        pairs[i].gold_score = 2.5;
    }
    let report = kfold_eval_trained(&pairs, &toy_params(&vocab, 1), &vocab, &CurriculumPlan::default(), &options(3, false)).unwrap();
    assert_eq!(report.excluded_folds, [0]);
    assert!(report.per_fold[0].spearman.is_none());
    let mean = (report.per_fold[1].spearman.unwrap() + report.per_fold[2].spearman.unwrap()) / 2.0;
    assert!((report.spearman_rho.unwrap() - mean).abs() < 1e-12);

    let flat = all_pairs(|_, _| 1.0);
    let report = kfold_eval_trained(&flat, &toy_params(&vocab, 1), &vocab, &CurriculumPlan::default(), &options(3, false)).unwrap();
    assert_eq!(report.excluded_folds.len(), 3);
    assert_eq!(report.spearman_rho, None);
}

#[test]
fn setting_and_plan_must_agree() {
    let vocab = toy_vocab();
    let pairs = all_pairs(|i, j| ((i + j) % 6) as f64);
    let err = kfold_eval_trained(&pairs, &toy_params(&vocab, 1), &vocab, &sts_plan(), &options(3, false)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    // Supervised evaluation appends a default fine-tuning stage.
    let report = kfold_eval_trained(&pairs, &toy_params(&vocab, 1), &vocab, &CurriculumPlan::default(), &EvalOptions {
        train: Default::default(),
        ..options(3, true)
    })
    .unwrap();
    assert_eq!(report.plan, "STS_tgt");
    assert!(report.per_fold.iter().all(|f| f.n_train == 20));
}

#[test]
fn supervised_eval_is_deterministic_and_parallel_safe() {
    let vocab = toy_vocab();
    let pairs = all_pairs(|i, j| ((i + 2 * j) % 6) as f64);
    let data = TrainingData::new().with(StageName::MlmTgt, StageInput::Corpus(TOY_SENTENCES.iter().map(|s| s.to_string()).collect()));
    let plan = CurriculumPlan::new(vec![
        Stage::new(StageName::MlmTgt).with_epochs(1).with_batch_size(4),
        sts_plan().stages[0].clone(),
    ]);
    let run = |parallel| {
        kfold_eval(&pairs, toy_params(&vocab, 3), &vocab, &plan, &data, &EvalOptions { parallel, ..options(3, true) }).unwrap()
    };
    let a = run(true);
    assert_eq!(a.to_json(), run(true).to_json());
    assert_eq!(a.to_json(), run(false).to_json());
    assert_eq!(a.plan, "MLM_tgt→STS_tgt");
}

#[test]
fn sweep_subsets_are_nested_and_full_ratio_matches_kfold() {
    assert_eq!(subset_size(0.1, 27), 2);
    assert_eq!(subset_size(0.3, 10), 3);
    assert_eq!(subset_size(1.0, 27), 27);
    let vocab = toy_vocab();
    let pairs = all_pairs(|i, j| ((i + 2 * j) % 6) as f64);
    let params = toy_params(&vocab, 6);
    let ratios = [0.25, 0.5, 1.0];
    let sweep = sample_efficiency_sweep_trained(&pairs, &params, &vocab, &sts_plan(), &ratios, &options(3, true)).unwrap();
    assert_eq!(sweep.points.len(), 3);
    for (point, r) in sweep.points.iter().zip(ratios) {
        assert_eq!(point.ratio, r);
        assert!(point.per_fold.iter().all(|f| f.n_train == subset_size(r, 20)));
    }
    let full = kfold_eval_trained(&pairs, &params, &vocab, &sts_plan(), &options(3, true)).unwrap();
    assert_eq!(sweep.points[2].per_fold, full.per_fold);
    assert_eq!(sweep.points[2].spearman, full.spearman_rho);
    assert!(sample_efficiency_sweep_trained(&pairs, &params, &vocab, &sts_plan(), &[0.5, 0.2], &options(3, true)).is_err());
    assert!(sample_efficiency_sweep_trained(&pairs, &params, &vocab, &sts_plan(), &[0.0, 1.0], &options(3, true)).is_err());
}

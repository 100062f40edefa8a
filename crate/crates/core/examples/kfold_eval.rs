//! 10-fold evaluation of an untrained encoder (unsupervised) and of an
//! encoder fine-tuned per fold on the training folds (supervised).

use argsim::curriculum::{CurriculumPlan, Stage, StageInput, StageName, TrainingData};
use argsim::datasets::{synth_generate, SynthSpec};
use argsim::encoder::{EncoderConfig, EncoderParams};
use argsim::evalkit::{kfold_eval, EvalOptions, EvalReport};
use argsim::numcore::{stream, SeedPurpose};
use argsim::textproc::Vocab;

fn show(report: &EvalReport) {
    println!(
        "{:<16} supervised={:<5} r={:.4} rho={:.4}",
        report.plan,
        report.supervised,
        report.pearson_r.unwrap_or(f64::NAN),
        report.spearman_rho.unwrap_or(f64::NAN)
    );
    for f in &report.per_fold {
        print!("  [{} {:.3}]", f.fold, f.spearman.unwrap_or(f64::NAN));
    }
    println!();
}

fn main() -> argsim::Result<()> {
    let data = synth_generate(&SynthSpec {
        target_pairs: 400,
        ..SynthSpec::default()
    })?;
    let vocab = Vocab::build(&data.target_corpus.sentences, 1, 10_000)?;
    let base = EncoderParams::init(&EncoderConfig::desk(vocab.len()), &mut stream(42, 0, SeedPurpose::Init))?;
    let pairs = &data.target_pairs.records;
    let training = TrainingData::new().with(StageName::MlmTgt, StageInput::Corpus(data.target_corpus.sentences.clone()));

    let untrained = kfold_eval(pairs, base.clone(), &vocab, &CurriculumPlan::default(), &training, &EvalOptions::default())?;
    show(&untrained);

    let plan = CurriculumPlan::new(vec![
        Stage::new(StageName::MlmTgt).with_epochs(2).with_lr(1e-3),
        Stage::new(StageName::StsTgt).with_lr(1e-3),
    ]);
    let options = EvalOptions {
        supervised: true,
        ..EvalOptions::default()
    };
    let tuned = kfold_eval(pairs, base, &vocab, &plan, &training, &options)?;
    show(&tuned);
    Ok(())
}

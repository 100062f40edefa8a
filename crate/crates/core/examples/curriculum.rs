//! Stage plans: the standard unsupervised and supervised sets, ordering
//! rules, and a short run with per-stage logs.

use argsim::curriculum::{
    enumerate_paper_plans, run_curriculum, CurriculumPlan, Setting, Stage, StageInput, StageName, TrainOptions,
    TrainingData,
};
use argsim::datasets::{synth_generate, SynthSpec};
use argsim::encoder::{EncoderConfig, EncoderParams};
use argsim::numcore::{stream, SeedPurpose};
use argsim::textproc::Vocab;

fn main() -> argsim::Result<()> {
    for setting in [Setting::Unsupervised, Setting::Supervised] {
        println!("{setting:?} plans:");
        for plan in enumerate_paper_plans(setting) {
            println!("  {}", plan.id());
        }
    }
    for names in [
        &[StageName::StsSrc, StageName::MlmDomain][..],
        &[StageName::StsTgt, StageName::MlmTgt][..],
    ] {
        if let Err(e) = CurriculumPlan::from_names(names).check() {
            println!("rejected: {e}");
        }
    }

    let data = synth_generate(&SynthSpec {
        domain_sentences: 300,
        target_pairs: 150,
        source_pairs: 150,
        ..SynthSpec::default()
    })?;
    let all = [
        data.domain_corpus.sentences.clone(),
        data.target_corpus.sentences.clone(),
        data.source_pairs.sentences(),
    ]
    .concat();
    let vocab = Vocab::build(&all, 1, 10_000)?;
    let params = EncoderParams::init(&EncoderConfig::desk(vocab.len()), &mut stream(42, 0, SeedPurpose::Init))?;
    let training = TrainingData::new()
        .with(StageName::MlmDomain, StageInput::Corpus(data.domain_corpus.sentences))
        .with(StageName::MlmTgt, StageInput::Corpus(data.target_corpus.sentences))
        .with(StageName::StsSrc, StageInput::Pairs(data.source_pairs.records));
    let plan = CurriculumPlan::new(vec![
        Stage::new(StageName::MlmDomain).with_epochs(2).with_lr(1e-3),
        Stage::new(StageName::MlmTgt).with_epochs(2).with_lr(1e-3),
        Stage::new(StageName::StsSrc).with_epochs(2).with_lr(1e-3),
    ]);
    println!("\nrunning {}", plan.id());
    let (_, logs) = run_curriculum(&plan, params, &vocab, &training, &TrainOptions::default())?;
    for log in &logs {
        println!(
            "  {} #{}: first batch {:.4}, epochs {:?}, {} steps, clip scale >= {:.3}",
            log.stage,
            log.stage_index,
            log.first_batch_loss,
            log.epoch_losses.iter().map(|l| (l * 1e4).round() / 1e4).collect::<Vec<_>>(),
            log.steps,
            log.min_clip_scale
        );
    }
    Ok(())
}

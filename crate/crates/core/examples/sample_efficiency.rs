//! Correlation as a function of how much labeled target data the final
//! fine-tuning stage sees. Prints the sweep as CSV.

use argsim::curriculum::{CurriculumPlan, Stage, StageInput, StageName, TrainingData};
use argsim::datasets::{synth_generate, SynthSpec};
use argsim::encoder::{EncoderConfig, EncoderParams};
use argsim::evalkit::{default_ratios, sample_efficiency_sweep, EvalOptions};
use argsim::numcore::{stream, SeedPurpose};
use argsim::textproc::Vocab;

fn main() -> argsim::Result<()> {
    let data = synth_generate(&SynthSpec {
        target_pairs: 200,
        ..SynthSpec::default()
    })?;
    let vocab = Vocab::build(&data.target_corpus.sentences, 1, 10_000)?;
    let base = EncoderParams::init(&EncoderConfig::desk(vocab.len()), &mut stream(42, 0, SeedPurpose::Init))?;
    let training = TrainingData::new().with(StageName::MlmTgt, StageInput::Corpus(data.target_corpus.sentences.clone()));
    let plan = CurriculumPlan::new(vec![
        Stage::new(StageName::MlmTgt).with_epochs(2).with_lr(1e-3),
        Stage::new(StageName::StsTgt).with_lr(3e-4),
    ]);
    let options = EvalOptions {
        supervised: true,
        ..EvalOptions::default()
    };
    let sweep = sample_efficiency_sweep(
        &data.target_pairs.records,
        base,
        &vocab,
        &plan,
        &training,
        &default_ratios(),
        &options,
    )?;
    print!("{}", sweep.to_csv());
    Ok(())
}

//! The NLI classification stage used as a control: a throwaway 3-way head
//! over [u; v; |u - v|] trains the encoder, then is discarded.

use argsim::curriculum::{run_curriculum, CurriculumPlan, Stage, StageInput, StageName, TrainOptions, TrainingData};
use argsim::datasets::{synth_generate, SynthSpec};
use argsim::encoder::{EncoderConfig, EncoderParams};
use argsim::evalkit::{score_pairs, spearman};
use argsim::numcore::{stream, SeedPurpose};
use argsim::objectives::{NliExample, NliLabel};
use argsim::textproc::Vocab;

fn main() -> argsim::Result<()> {
    let data = synth_generate(&SynthSpec {
        target_pairs: 200,
        source_pairs: 300,
        ..SynthSpec::default()
    })?;
    // Source pairs relabelled by score band stand in for an NLI corpus.
    let nli: Vec<NliExample> = data
        .source_pairs
        .records
        .iter()
        .map(|r| NliExample {
            premise: r.sentence_a.clone(),
            hypothesis: r.sentence_b.clone(),
            label: match r.gold_score {
                s if s >= 3.5 => NliLabel::Entailment,
                s if s >= 1.5 => NliLabel::Neutral,
                _ => NliLabel::Contradiction,
            },
        })
        .collect();
    let all = [data.target_corpus.sentences.clone(), data.source_pairs.sentences()].concat();
    let vocab = Vocab::build(&all, 1, 10_000)?;
    let base = EncoderParams::init(&EncoderConfig::desk(vocab.len()), &mut stream(42, 0, SeedPurpose::Init))?;
    let training = TrainingData::new().with(StageName::NliSrc, StageInput::Nli(nli));
    let plan = CurriculumPlan::new(vec![Stage::new(StageName::NliSrc).with_lr(1e-3)]);

    let pairs = &data.target_pairs.records;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold_score).collect();
    let before = spearman(&score_pairs(&base, &vocab, pairs)?, &gold)?;
    let (trained, logs) = run_curriculum(&plan, base, &vocab, &training, &TrainOptions::default())?;
    let after = spearman(&score_pairs(&trained, &vocab, pairs)?, &gold)?;
    println!("NLI epochs: {:?}", logs[0].epoch_losses);
    println!("target rho before {before:.4}, after NLI {after:.4}");
    println!("encoder tensors after training: {} (no classifier)", trained.store.len());
    Ok(())
}

//! The file-based workflow behind the `argsim` binary: synthesize data,
//! build a vocabulary, train with stage checkpoints, evaluate and score.

use argsim::cli::{cmd_eval, cmd_score, cmd_synth, cmd_train, cmd_vocab, load_plan, EvalArgs, RunConfig};
use argsim::datasets::SynthSpec;

fn main() -> argsim::Result<()> {
    let dir = std::env::temp_dir().join("argsim-pipeline");
    let spec = SynthSpec {
        domain_sentences: 300,
        target_pairs: 200,
        source_pairs: 200,
        ..SynthSpec::default()
    };
    let synth = cmd_synth(&spec, &dir)?;
    let plan_path = dir.join("plan.json");
    std::fs::write(&plan_path, r#"["MLM_domain", {"name": "MLM_tgt", "epochs": 2}, {"name": "STS_src", "lr": 1e-3}]"#)
        .expect("write plan");

    let mut config = RunConfig::load(&synth.config)?;
    config.output_dir = dir.join("run");
    config.plan = Some(plan_path);
    config.finetune.lr = Some(1e-3);
    let (vocab, vocab_path) = cmd_vocab(&config, None)?;
    println!("vocab: {} tokens at {}", vocab.len(), vocab_path.display());

    let plan = load_plan(&config)?;
    let outcome = cmd_train(&config, &plan, true)?;
    println!("reused {} stage(s)", outcome.reused_stages);
    for p in &outcome.stage_checkpoints {
        println!("  {}", p.display());
    }

    for supervised in [false, true] {
        let name = if supervised { "supervised.json" } else { "unsupervised.json" };
        let args = EvalArgs {
            supervised,
            report: Some(config.output_dir.join(name)),
            ..Default::default()
        };
        let (report, path) = cmd_eval(&config, &outcome.final_checkpoint, &args)?;
        println!(
            "{}: rho {:.4} -> {}",
            report.plan,
            report.spearman_rho.unwrap_or(f64::NAN),
            path.display()
        );
    }
    let s = cmd_score(&outcome.final_checkpoint, "bakoti lumera fesodi", "bakoti fesodi")?;
    println!("score {:.3} (cosine {:+.4})", s.score, s.cosine);
    Ok(())
}

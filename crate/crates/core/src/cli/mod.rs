//! Command-line front end: `synth`, `vocab`, `train`, `eval`, `sweep`, `score`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_score, cmd_sweep, cmd_synth, cmd_train, cmd_vocab, display_score, load_checkpoint, load_plan,
    load_training_data, prefix_hash, EvalArgs, Score, SweepArgs, SynthOutcome, TrainOutcome,
};
pub use config::{EncoderSettings, FinetuneSettings, RunConfig};

use crate::datasets::SynthSpec;
use crate::error::{Error, Result};
use crate::io::read_to_string;

pub const OUTPUT_DIR_ENV: &str = "ARGSIM_OUTPUT_DIR";

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 2,
        Error::Validation { .. } | Error::Config(_) | Error::Input(_) | Error::Json(_) => 3,
        Error::Integrity(_) => 4,
        Error::Io { .. } => 5,
        _ => 1,
    }
}

#[derive(Debug, Parser)]
#[command(name = "argsim", version, about = "Sentence-pair similarity with staged transfer training")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub plan: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    #[arg(long, global = true)]
    pub domain_corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub target_pairs: Option<PathBuf>,
    #[arg(long, global = true)]
    pub source_pairs: Option<PathBuf>,
    #[arg(long, global = true)]
    pub nli: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and a config that uses it.
    Synth {
        /// SynthSpec JSON; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the vocabulary over every configured corpus.
    Vocab {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the plan, checkpointing after each stage.
    Train {
        /// Retrain every stage even if a prefix checkpoint exists.
        #[arg(long)]
        fresh: bool,
    },
    /// k-fold evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Fine-tune with STS_tgt on the training folds.
        #[arg(long)]
        supervised: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Supervised evaluation at 10%, 20%, …, 100% of the labeled pairs.
    Sweep {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Checkpoint whose supervised score is drawn as the reference line.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Similarity of two sentences under a checkpoint.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        sentence_a: String,
        sentence_b: String,
        #[arg(long)]
        json: bool,
    },
}

impl Cli {
    /// The config file (or defaults) with flag values applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        for (flag, field) in [
            (&self.plan, &mut c.plan),
            (&self.vocab, &mut c.vocab),
            (&self.domain_corpus, &mut c.domain_corpus),
            (&self.target_pairs, &mut c.target_pairs),
            (&self.source_pairs, &mut c.source_pairs),
            (&self.nli, &mut c.nli),
        ] {
            if flag.is_some() {
                field.clone_from(flag);
            }
        }
        Ok(c)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = cli.run_config()?;
    match &cli.command {
        Command::Synth { spec, out } => {
            let mut s = match spec {
                Some(path) => serde_json::from_str(&read_to_string(path)?)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            let o = cmd_synth(&s, out)?;
            println!("wrote synthetic data and {}", o.config.display());
        }
        Command::Vocab { out } => {
            let (vocab, path) = cmd_vocab(&config, out.as_deref())?;
            println!("{} tokens -> {}", vocab.len(), path.display());
        }
        Command::Train { fresh } => {
            let plan = load_plan(&config)?;
            let o = cmd_train(&config, &plan, !fresh)?;
            for log in &o.logs {
                println!(
                    "{:>2} {:<10} loss {:.4} -> {:.4}  steps {}",
                    log.stage_index,
                    log.stage.as_str(),
                    log.first_batch_loss,
                    log.epoch_losses.last().copied().unwrap_or(f64::NAN),
                    log.steps
                );
            }
            println!("final checkpoint {}", o.final_checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            pairs,
            supervised,
            report,
        } => {
            let args = EvalArgs {
                pairs: pairs.clone(),
                supervised: *supervised,
                report: report.clone(),
            };
            let (r, path) = cmd_eval(&config, checkpoint, &args)?;
            println!(
                "{}: pearson {}  spearman {}  ({} folds, {} excluded) -> {}",
                r.plan,
                fmt_metric(r.pearson_r),
                fmt_metric(r.spearman_rho),
                r.k,
                r.excluded_folds.len(),
                path.display()
            );
        }
        Command::Sweep {
            checkpoint,
            baseline,
            pairs,
        } => {
            let args = SweepArgs {
                checkpoint: checkpoint.clone(),
                baseline: baseline.clone(),
                pairs: pairs.clone(),
            };
            let (r, json, csv) = cmd_sweep(&config, &args)?;
            for p in &r.points {
                println!("{:.1}  pearson {}  spearman {}", p.ratio, fmt_metric(p.pearson), fmt_metric(p.spearman));
            }
            println!("-> {} {}", json.display(), csv.display());
        }
        Command::Score {
            checkpoint,
            sentence_a,
            sentence_b,
            json,
        } => {
            let s = cmd_score(checkpoint, sentence_a, sentence_b)?;
            if *json {
                println!("{}", serde_json::to_string(&s)?);
            } else {
                println!("cosine {}\nscore {}", s.cosine, s.score);
            }
        }
    }
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

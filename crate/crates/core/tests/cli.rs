use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use argsim::cli::{
    cmd_eval, cmd_score, cmd_sweep, cmd_synth, cmd_train, cmd_vocab, exit_code, load_plan, Cli, EvalArgs, RunConfig,
    SweepArgs,
};
use argsim::datasets::{load_corpus, load_pairs, SynthSpec};
use argsim::evalkit::parse_sweep_csv;
use argsim::textproc::{tokenize, Vocab, SPECIAL_TOKENS};
use argsim::Error;
use clap::Parser;

fn small_spec() -> SynthSpec {
    SynthSpec {
        general_pool: 30,
        domain_pool: 30,
        domain_sentences: 60,
        target_pairs: 40,
        source_pairs: 30,
        ..SynthSpec::default()
    }
}

/// Synthesizes a small dataset in `dir` and returns a fast config for it.
fn setup(dir: &Path, plan: Option<&str>) -> RunConfig {
    let out = cmd_synth(&small_spec(), dir).unwrap();
    let mut c = RunConfig::load(&out.config).unwrap();
    c.output_dir = dir.join("run");
    c.encoder.hidden = 16;
    c.encoder.ff = 32;
    c.encoder.max_len = 16;
    c.folds = 4;
    c.finetune.epochs = Some(1);
    if let Some(p) = plan {
        let path = dir.join("plan.json");
        fs::write(&path, p).unwrap();
        c.plan = Some(path);
    }
    c
}

const PLAN3: &str = r#"[{"name": "MLM_domain", "epochs": 1}, {"name": "MLM_tgt", "epochs": 1}, {"name": "STS_src", "epochs": 1}]"#;

#[test]
fn vocab_file_layout_and_counts() {
    let dir = tempfile::tempdir().unwrap();
    let c = setup(dir.path(), None);
    let (vocab, path) = cmd_vocab(&c, None).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(&lines[..5], &SPECIAL_TOKENS);
    assert_eq!(lines.len(), vocab.len());

    // Every distinct token across the configured files, by a separate count.
    let mut words: Vec<String> = Vec::new();
    for p in [&c.domain_corpus, &c.target_corpus] {
        for s in load_corpus(p.as_ref().unwrap()).unwrap().sentences {
            words.extend(tokenize(&s));
        }
    }
    for p in [&c.target_pairs, &c.source_pairs] {
        for s in load_pairs(p.as_ref().unwrap()).unwrap().sentences() {
            words.extend(tokenize(&s));
        }
    }
    words.sort();
    words.dedup();
    assert_eq!(vocab.len(), words.len() + 5);

    let again = cmd_vocab(&c, Some(&dir.path().join("v2.txt"))).unwrap().1;
    assert_eq!(fs::read(&path).unwrap(), fs::read(again).unwrap());
}

#[test]
fn train_writes_stage_checkpoints_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = setup(dir.path(), Some(PLAN3));
    let plan = load_plan(&c).unwrap();
    let a = cmd_train(&c, &plan, false).unwrap();
    assert_eq!(a.stage_checkpoints.len(), 3);
    assert!(a.stage_checkpoints.iter().all(|p| p.exists()));
    assert!(a.final_checkpoint.exists());
    let logs = fs::read_to_string(c.output_dir.join("stage_logs.jsonl")).unwrap();
    assert_eq!(logs.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(logs.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage"], "MLM_domain");
    assert_eq!(first["config_hash"], c.hash());

    let bytes = fs::read(&a.final_checkpoint).unwrap();
    let stage_bytes: Vec<Vec<u8>> = a.stage_checkpoints.iter().map(|p| fs::read(p).unwrap()).collect();
    let b = cmd_train(&c, &plan, false).unwrap();
    assert_eq!(fs::read(&b.final_checkpoint).unwrap(), bytes);
    for (p, old) in b.stage_checkpoints.iter().zip(&stage_bytes) {
        assert_eq!(&fs::read(p).unwrap(), old);
    }

    // Reusing all three stage checkpoints reproduces the same final model.
    let r = cmd_train(&c, &plan, true).unwrap();
    assert_eq!(r.reused_stages, 3);
    assert_eq!(fs::read(&r.final_checkpoint).unwrap(), bytes);
}

#[test]
fn invalid_plan_is_refused_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let c = setup(dir.path(), Some(r#"["STS_src", "MLM_domain"]"#));
    let err = load_plan(&c).and_then(|p| cmd_train(&c, &p, false)).unwrap_err();
    assert!(err.to_string().contains("MLM_domain must be first"), "{err}");
    assert_eq!(exit_code(&err), 3);
    assert!(!c.output_dir.join("final.ckpt").exists());
}

#[test]
fn eval_sweep_and_score_flow() {
    let dir = tempfile::tempdir().unwrap();
    let c = setup(dir.path(), Some(r#"[{"name": "MLM_tgt", "epochs": 1}]"#));
    let trained = cmd_train(&c, &load_plan(&c).unwrap(), true).unwrap();

    let args = EvalArgs {
        supervised: true,
        ..Default::default()
    };
    let (report, path) = cmd_eval(&c, &trained.final_checkpoint, &args).unwrap();
    assert_eq!(report.plan, "MLM_tgt→STS_tgt");
    assert_eq!(report.per_fold.len(), 4);
    let first = fs::read(&path).unwrap();
    cmd_eval(&c, &trained.final_checkpoint, &args).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);

    let unsup = cmd_eval(&c, &trained.final_checkpoint, &EvalArgs::default()).unwrap().0;
    assert_eq!(unsup.plan, "MLM_tgt");

    let (sweep, json, csv) = cmd_sweep(
        &c,
        &SweepArgs {
            checkpoint: Some(trained.final_checkpoint.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(sweep.points.len(), 10);
    assert_eq!(sweep.points[9].per_fold, report.per_fold);
    let rows = parse_sweep_csv(&fs::read_to_string(csv).unwrap()).unwrap();
    let from_json: argsim::evalkit::SweepResult = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(rows.len(), 10);
    for (row, point) in rows.iter().zip(&from_json.points) {
        assert_eq!(*row, (point.ratio, point.pearson, point.spearman));
    }

    let s = cmd_score(&trained.final_checkpoint, "bakoti lumera", "bakoti lumera").unwrap();
    assert!((s.cosine - 1.0).abs() < 1e-12);
    assert!((s.score - 5.0).abs() < 1e-9);
}

#[test]
fn checkpoint_from_another_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = setup(dir.path(), Some(r#"[{"name": "MLM_tgt", "epochs": 1}]"#));
    let trained = cmd_train(&c, &load_plan(&c).unwrap(), false).unwrap();
    let other: Vocab = Vocab::build(&["entirely different words"], 1, 100).unwrap();
    fs::write(c.vocab_path(), other.to_file_string()).unwrap();
    let err = cmd_eval(&c, &trained.final_checkpoint, &EvalArgs::default()).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)));
    assert_eq!(exit_code(&err), 4);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_argsim"))
}

#[test]
fn binary_end_to_end_with_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, serde_json::to_string(&small_spec()).unwrap()).unwrap();
    let st = bin().args(["synth", "--spec"]).arg(&spec).arg("--out").arg(&data).status().unwrap();
    assert!(st.success());
    let config = data.join("config.json");
    let out: PathBuf = dir.path().join("envout");
    let st = bin()
        .env("ARGSIM_OUTPUT_DIR", &out)
        .arg("--config")
        .arg(&config)
        .arg("vocab")
        .status()
        .unwrap();
    assert!(st.success());
    assert!(data.join("vocab.txt").exists());

    let plan = dir.path().join("plan.json");
    fs::write(&plan, r#"[{"name": "MLM_tgt", "epochs": 1, "batch_size": 32}]"#).unwrap();
    let st = bin()
        .env("ARGSIM_OUTPUT_DIR", &out)
        .arg("--config")
        .arg(&config)
        .arg("--plan")
        .arg(&plan)
        .arg("train")
        .status()
        .unwrap();
    assert!(st.success());
    let ck = out.join("final.ckpt");
    assert!(ck.exists());

    let o = bin()
        .args(["score", "--checkpoint"])
        .arg(&ck)
        .args(["gun control", "gun control", "--json"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["cosine"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let bad = bin().arg("--config").arg(dir.path().join("none.json")).arg("vocab").status().unwrap();
    assert_eq!(bad.code(), Some(5));
    let usage = bin().arg("vocab").env("ARGSIM_OUTPUT_DIR", &out).current_dir(dir.path()).status().unwrap();
    assert_eq!(usage.code(), Some(2));
}

#[test]
fn flags_override_config_and_env() {
    let cli = Cli::try_parse_from(["argsim", "--seed", "7", "--folds", "5", "--output-dir", "x", "vocab"]).unwrap();
    let c = cli.run_config().unwrap();
    assert_eq!((c.seed, c.folds, c.output_dir), (7, 5, PathBuf::from("x")));
    assert!(Cli::try_parse_from(["argsim", "frobnicate"]).is_err());
}

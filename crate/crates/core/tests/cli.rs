mod common;

use std::path::Path;
use std::process::Command;

use plan::cli;
use plan::config::{RunConfig, DATA_ROOT_ENV};
use plan::synth::marker_corpus;
use plan::thread::{Dataset, Post, Thread, Veracity};
use plan::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn plan_bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_plan"));
    c.env_remove(DATA_ROOT_ENV);
    c
}

fn lone_thread(claim: &str) -> Thread {
    let post = Post {
        id: "solo".into(),
        parent_id: None,
        text: "nobody replied to this marker0".into(),
        latency_minutes: 0.0,
        token_ids: Vec::new(),
        is_source: true,
        retweet: false,
    };
    Thread::from_posts(claim.into(), Veracity::True, Dataset::Twitter15, None, vec![post]).unwrap()
}

#[test]
fn preprocess_rejects_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("raw")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.preprocess.raw_dir = Some(tmp.path().join("raw"));
    cfg.out = Some(tmp.path().join("out"));
    let err = cli::cmd_preprocess(&cfg).unwrap_err();
    assert!(err.to_string().contains("no threads found"), "{err}");
}

#[test]
fn corrupt_files_are_reported_and_the_rest_processed() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(1), 6, Dataset::Twitter15);
    common::write_raw(&tmp.path().join("raw"), &corpus);
    std::fs::write(tmp.path().join("raw/broken.json"), "{\"claim_id\": ").unwrap();

    let out = plan_bin()
        .args(["preprocess", "--raw-dir"])
        .arg(tmp.path().join("raw"))
        .arg("--out")
        .arg(tmp.path().join("data"))
        .args(["--set", "preprocess.embedding_dim=8"])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success());
    assert!(stderr.contains("broken.json"), "{stderr}");
    let written = std::fs::read_dir(tmp.path().join("data/threads")).unwrap().count();
    assert_eq!(written, 6);
    assert!(tmp.path().join("data/vocab.txt").is_file());
    assert!(tmp.path().join("data/config.toml").is_file());
}

#[test]
fn train_eval_explain_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(2), 20, Dataset::Twitter15);
    corpus.push(lone_thread("lonely"));
    common::write_raw(&tmp.path().join("raw"), &corpus);
    let mut cfg = RunConfig {
        seed: 2,
        ..RunConfig::default()
    };
    cfg.preprocess.raw_dir = Some(tmp.path().join("raw"));
    cfg.preprocess.embedding_dim = Some(8);
    cfg.out = Some(tmp.path().join("data"));
    assert_eq!(cli::cmd_preprocess(&cfg).unwrap().threads, 21);
    cfg.train.data = Some(tmp.path().join("data"));

    let run_dir = tmp.path().join("run");
    let run = common::small_run(cfg, "plan", 8, run_dir.clone());
    let report = cli::cmd_train(&run, None).unwrap();
    for f in ["config.toml", "model.ckpt", "train_log.csv", "splits.json", "metrics.csv", "metrics.json"] {
        assert!(run_dir.join(f).is_file(), "missing {f}");
    }
    let persisted = std::fs::read_to_string(run_dir.join("config.toml")).unwrap();
    assert!(persisted.contains("seed = 2") && persisted.contains("deterministic = true"), "{persisted}");

    let mut eval = RunConfig::default();
    eval.eval.checkpoint = Some(run_dir.clone());
    let again = cli::cmd_eval(&eval).unwrap();
    assert_eq!(again, report);
    eval.eval.split = Some("all".into());
    assert_eq!(cli::cmd_eval(&eval).unwrap().total, 21);
    assert!(run_dir.join("eval-all/metrics.csv").is_file());

    let mut explain = RunConfig::default();
    explain.explain.checkpoint = Some(run_dir.join("model.ckpt"));
    explain.explain.claims = vec!["lonely".into(), "m000".into()];
    let out = cli::cmd_explain(&explain).unwrap();
    assert!(out[0].top3.is_empty());
    assert_eq!(out[0].important_post.post_id, "solo");
    assert!(!out[1].top3.is_empty());
    assert!(out[1].heatmaps.is_empty());
    assert!(run_dir.join("explanations/lonely.json").is_file());

    explain.explain.heatmap = true;
    assert!(matches!(cli::cmd_explain(&explain), Err(Error::Capability(_))));

    explain.explain.heatmap = false;
    explain.explain.claims = vec!["missing".into()];
    assert!(matches!(cli::cmd_explain(&explain), Err(Error::Data(_))));
}

#[test]
fn eval_rejects_data_with_other_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::marker_data(&tmp.path().join("tw"), 12, 8, 3);
    let run = common::small_run(cfg, "plan", 8, tmp.path().join("run"));
    cli::cmd_train(&run, None).unwrap();

    let pheme = marker_corpus(&mut ChaCha8Rng::seed_from_u64(3), 9, Dataset::Pheme);
    common::write_raw(&tmp.path().join("ph/raw"), &pheme);
    let mut pre = RunConfig::default();
    pre.preprocess.raw_dir = Some(tmp.path().join("ph/raw"));
    pre.preprocess.embedding_dim = Some(8);
    pre.out = Some(tmp.path().join("ph/data"));
    cli::cmd_preprocess(&pre).unwrap();

    let mut eval = RunConfig::default();
    eval.eval.checkpoint = Some(tmp.path().join("run"));
    eval.eval.split = Some("all".into());
    eval.train.data = Some(tmp.path().join("ph/data"));
    assert!(matches!(cli::cmd_eval(&eval), Err(Error::Config(_))));
}

#[test]
fn event_folds_write_per_fold_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(4), 18, Dataset::Pheme);
    for (i, t) in corpus.iter_mut().enumerate() {
        t.event = Some(["ferguson", "ottawa shooting", "sydney siege"][i % 3].into());
    }
    common::write_raw(&tmp.path().join("raw"), &corpus);
    let mut cfg = RunConfig::from_toml("[split]\nmode = \"event-cv\"\n", &[]).unwrap();
    cfg.preprocess.raw_dir = Some(tmp.path().join("raw"));
    cfg.preprocess.embedding_dim = Some(8);
    cfg.out = Some(tmp.path().join("data"));
    cli::cmd_preprocess(&cfg).unwrap();
    cfg.train.data = Some(tmp.path().join("data"));

    let run = common::small_run(cfg, "sta-plan", 8, tmp.path().join("run"));
    let report = cli::cmd_train(&run, None).unwrap();
    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.total, 18);
    assert!(report.fold_mean_macro_f1.is_some());
    for fold in ["fold-ferguson", "fold-ottawa_shooting", "fold-sydney_siege"] {
        assert!(tmp.path().join("run").join(fold).join("model.ckpt").is_file(), "{fold}");
    }
    let csv = std::fs::read_to_string(tmp.path().join("run/metrics.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("fold:ferguson,")), "{csv}");
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn binary_resolves_paths_against_the_data_root() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(5), 12, Dataset::Twitter16);
    common::write_raw(&tmp.path().join("raw"), &corpus);
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        "[preprocess]\nraw_dir = \"raw\"\nembedding_dim = 8\n\
         [model]\nvariant = \"sta-hitplan\"\ns = 1\ns_word = 1\nd_model = 8\nd_ff = 8\nh = 2\n\
         [train]\ndata = \"data\"\nepochs = 2\nwarmup_steps = 10\n",
    )
    .unwrap();
    let root = || {
        let mut c = plan_bin();
        c.env(DATA_ROOT_ENV, tmp.path()).arg("--config").arg(&config);
        c
    };

    let stdout = run_ok(root().arg("preprocess").arg("--out").arg(tmp.path().join("data")));
    assert!(stdout.starts_with("dataset,"), "{stdout}");
    let stats = run_ok(root().arg("stats").arg("data"));
    assert!(stats.lines().nth(1).unwrap().starts_with("twitter16,"), "{stats}");

    let stdout = run_ok(
        root()
            .args(["train", "--seed", "9", "--deterministic", "--out"])
            .arg(tmp.path().join("run")),
    );
    assert!(stdout.starts_with("class,precision,recall,f1,support"), "{stdout}");
    let stdout = run_ok(
        root()
            .args(["explain", "--heatmap", "--claim", "m001", "--checkpoint"])
            .arg(tmp.path().join("run")),
    );
    assert!(stdout.starts_with("m001 predicted="), "{stdout}");
    assert!(tmp.path().join("run/explanations/m001.heatmap.csv").is_file());
}

#[test]
fn binary_reports_usage_and_config_errors() {
    let out = plan_bin().arg("train").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
    let tmp = tempfile::tempdir().unwrap();
    let out = plan_bin().arg("train").arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.data"));

    let out = plan_bin().args(["--set", "nonsense", "stats", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = plan_bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(Path::new(env!("CARGO_BIN_EXE_plan")).is_file());
}

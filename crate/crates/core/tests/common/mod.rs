#![allow(dead_code)]

use std::path::{Path, PathBuf};

use plan::cli;
use plan::config::RunConfig;
use plan::synth::marker_corpus;
use plan::thread::{Dataset, Thread};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Writes each thread as a raw document named after its claim.
pub fn write_raw(dir: &Path, threads: &[Thread]) {
    std::fs::create_dir_all(dir).unwrap();
    for t in threads {
        std::fs::write(dir.join(format!("{}.json", t.claim_id)), t.to_json(false)).unwrap();
    }
}

/// Raw marker corpus under `root/raw`, preprocessed into `root/data` with
/// random `dim`-dimensional vectors. Returns a config pointing at it.
pub fn marker_data(root: &Path, threads: usize, dim: usize, seed: u64) -> RunConfig {
    let corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(seed), threads, Dataset::Twitter15);
    write_raw(&root.join("raw"), &corpus);
    let mut cfg = RunConfig::from_toml("", &[]).unwrap();
    cfg.seed = seed;
    cfg.out = Some(root.join("data"));
    cfg.preprocess.raw_dir = Some(root.join("raw"));
    cfg.preprocess.embedding_dim = Some(dim);
    let summary = cli::cmd_preprocess(&cfg).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    cfg.train.data = Some(root.join("data"));
    cfg.out = None;
    cfg
}

/// Small, fast model and optimiser settings on top of `cfg`.
pub fn small_run(mut cfg: RunConfig, variant: &str, dim: usize, out: PathBuf) -> RunConfig {
    let text = format!(
        "[model]\nvariant = \"{variant}\"\ns = 2\ns_word = 1\nd_model = {dim}\nd_ff = {}\nh = 2\ndropout = 0.1\n\
         [train]\nepochs = 6\npatience = 6\nwarmup_steps = 20\n",
        2 * dim
    );
    let small = RunConfig::from_toml(&text, &[]).unwrap();
    cfg.model = small.model;
    cfg.train.optim = small.train.optim;
    cfg.deterministic = true;
    cfg.out = Some(out);
    cfg
}

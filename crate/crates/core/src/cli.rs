//! Command implementations behind the `plan` binary. Each command reads a
//! resolved [`RunConfig`], writes its artifacts under the output directory
//! together with that config, and returns a summary.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::explain::{explain, Explanation};
use crate::model::{Model, ModelConfig};
use crate::tensor::checkpoint;
use crate::tensor::ParamSet;
use crate::thread::{
    amend_unverified, dataset_stats, read_thread, remove_retweets, stats_csv, tokenize, Dataset, DatasetStats, Split,
    Thread, Vocabulary,
};
use crate::train::{evaluate, make_splits, train, FoldMetrics, MetricsReport};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.toml";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SPLITS_FILE: &str = "splits.json";
pub const THREADS_DIR: &str = "threads";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.out.clone().ok_or_else(|| Error::Config("no output directory (use --out)".into()))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn file_stem(claim_id: &str) -> String {
    claim_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn thread_dir(dir: &Path) -> PathBuf {
    let sub = dir.join(THREADS_DIR);
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

/// Reads every thread document under `dir` (or `dir/threads`), failing on
/// the first invalid file.
pub fn load_threads(dir: &Path) -> Result<Vec<Thread>> {
    let files = json_files(&thread_dir(dir))?;
    if files.is_empty() {
        return Err(Error::Data(format!("no threads found in {}", dir.display())));
    }
    files.iter().map(|f| read_thread(f)).collect()
}

fn common_dataset(threads: &[Thread]) -> Result<Dataset> {
    let d = threads[0].dataset;
    match threads.iter().find(|t| t.dataset != d) {
        Some(t) => Err(Error::Data(format!("claim {} is {} but expected {d}", t.claim_id, t.dataset))),
        None => Ok(d),
    }
}

#[derive(Debug)]
pub struct PreprocessSummary {
    pub threads: usize,
    pub stats: DatasetStats,
    /// Files that could not be processed, with the reason.
    pub failures: Vec<(PathBuf, Error)>,
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<PreprocessSummary> {
    let out = out_dir(cfg)?;
    let raw = cfg
        .preprocess
        .raw_dir
        .as_deref()
        .map(|p| cfg.input_path(p))
        .ok_or_else(|| Error::Config("preprocess.raw_dir is not set".into()))?;
    let files = json_files(&raw)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no threads found in {}", raw.display())));
    }

    let mut threads = Vec::new();
    let mut failures = Vec::new();
    let mut seen = HashSet::new();
    for f in files {
        let parsed = read_thread(&f).and_then(|t| {
            if let Some(d) = cfg.preprocess.dataset.filter(|&d| d != t.dataset) {
                return Err(Error::Data(format!("dataset is {} but {d} was requested", t.dataset)));
            }
            if !seen.insert(t.claim_id.clone()) {
                return Err(Error::Data(format!("duplicate claim id {}", t.claim_id)));
            }
            if cfg.preprocess.remove_retweets {
                remove_retweets(&t)
            } else {
                Ok(t)
            }
        });
        match parsed {
            Ok(t) => threads.push(t),
            Err(e) => failures.push((f, e)),
        }
    }
    if threads.is_empty() {
        return Err(Error::Data(format!("no valid threads in {}", raw.display())));
    }
    let dataset = common_dataset(&threads)?;

    let tokens: Vec<String> = threads
        .iter()
        .flat_map(|t| t.posts.iter().flat_map(|p| tokenize(&p.text)))
        .collect();
    let vocab = match &cfg.preprocess.embeddings {
        Some(path) => {
            let keep: HashSet<String> = tokens.iter().cloned().collect();
            Vocabulary::load(&cfg.input_path(path), Some(&keep))?
        }
        None => {
            let dim = cfg.preprocess.embedding_dim.unwrap_or(cfg.model.d_model);
            Vocabulary::random(tokens.iter().map(String::as_str), dim, cfg.seed)
        }
    };
    for t in &mut threads {
        t.tokenize_with(&vocab);
        write(&out.join(THREADS_DIR).join(format!("{}.json", file_stem(&t.claim_id))), t.to_json(true))?;
    }
    vocab.save(&out.join(VOCAB_FILE))?;
    let stats = dataset_stats(dataset.name(), &threads);
    write(&out.join("stats.csv"), stats_csv(std::slice::from_ref(&stats)))?;
    write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    Ok(PreprocessSummary {
        threads: threads.len(),
        stats,
        failures,
    })
}

/// Stats table for thread directories (raw or processed).
pub fn cmd_stats(cfg: &RunConfig, dirs: &[PathBuf]) -> Result<String> {
    if dirs.is_empty() {
        return Err(Error::Usage("stats needs at least one data directory".into()));
    }
    let mut rows = Vec::new();
    for d in dirs {
        let threads = load_threads(&cfg.input_path(d))?;
        rows.push(dataset_stats(common_dataset(&threads)?.name(), &threads));
    }
    let table = stats_csv(&rows);
    if let Some(out) = &cfg.out {
        write(&out.join("stats.csv"), &table)?;
        write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    }
    Ok(table)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    dataset: Dataset,
    model: ModelConfig,
}

/// Claim ids of one fold.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

fn data_and_vocab(cfg: &RunConfig) -> Result<(Vec<Thread>, Vocabulary)> {
    let data = cfg
        .train
        .data
        .as_deref()
        .map(|p| cfg.input_path(p))
        .ok_or_else(|| Error::Config("train.data is not set".into()))?;
    let threads = load_threads(&data)?;
    let vocab = Vocabulary::load(&data.join(VOCAB_FILE), None)?;
    Ok((threads, vocab))
}

fn pick(threads: &[Thread], idx: &[usize]) -> Vec<Thread> {
    idx.iter().map(|&i| threads[i].clone()).collect()
}

fn ids(threads: &[Thread]) -> Vec<String> {
    threads.iter().map(|t| t.claim_id.clone()).collect()
}

/// Trains one model per fold and reports metrics over the concatenated
/// test predictions, with a per-fold breakdown.
pub fn cmd_train(cfg: &RunConfig, mut progress: Option<&mut dyn FnMut(&str)>) -> Result<MetricsReport> {
    let out = out_dir(cfg)?;
    let (threads, vocab) = data_and_vocab(cfg)?;
    let dataset = common_dataset(&threads)?;
    let model_cfg = cfg.model.resolve(dataset)?;
    if vocab.dim() != model_cfg.d_model {
        return Err(Error::Config(format!(
            "vocabulary vectors have {} dimensions but d_model is {}",
            vocab.dim(),
            model_cfg.d_model
        )));
    }
    let folds = make_splits(&threads, &cfg.split_plan())?;
    let amend = cfg.train.amend_unverified && dataset.is_twitter();

    let mut resolved = cfg.clone();
    resolved.model.k = Some(model_cfg.k);
    write(&out.join(CONFIG_FILE), resolved.to_toml())?;

    let names: Vec<&str> = dataset.labels().iter().map(|l| l.name()).collect();
    let mut gold = Vec::new();
    let mut predicted = Vec::new();
    let mut fold_metrics = Vec::new();
    for fold in &folds {
        let dir = if folds.len() == 1 { out.clone() } else { out.join(format!("fold-{}", file_stem(&fold.name))) };
        let (mut tr, mut va, mut te) = (pick(&threads, &fold.train), pick(&threads, &fold.val), pick(&threads, &fold.test));
        if amend {
            tr = amend_unverified(tr, Split::Train);
            va = amend_unverified(va, Split::Train);
            te = amend_unverified(te, Split::Test);
        }
        let split_ids = SplitIds {
            train: ids(&tr),
            val: ids(&va),
            test: ids(&te),
        };
        write(&dir.join(SPLITS_FILE), serde_json::to_string_pretty(&split_ids).unwrap())?;

        let (model, mut params) = Model::init::<f32>(model_cfg.clone(), cfg.seed)?;
        let fold_name = fold.name.clone();
        let mut report = |e: &crate::train::EpochLog| {
            if let Some(p) = progress.as_mut() {
                p(&format!(
                    "[{fold_name}] epoch {} lr {:.3e} loss {:.4} val macro F1 {:.4}",
                    e.epoch, e.lr, e.train_loss, e.val_macro_f1
                ));
            }
        };
        let outcome = train(&model, &mut params, &tr, &va, &vocab, &cfg.train.optim, cfg.seed, Some(&mut report))?;
        write(&dir.join("train_log.csv"), outcome.log_csv())?;
        let meta = serde_json::to_string(&CheckpointMeta {
            dataset,
            model: model_cfg.clone(),
        })
        .unwrap();
        checkpoint::save(&dir.join(CHECKPOINT_FILE), &meta, &params)?;

        if te.is_empty() {
            continue;
        }
        let eval = evaluate(&model, &params, &te, &vocab)?;
        if folds.len() > 1 {
            write(&dir.join("metrics.csv"), eval.report.to_csv())?;
            write(&dir.join("metrics.json"), eval.report.to_json())?;
        }
        fold_metrics.push(FoldMetrics {
            fold: fold.name.clone(),
            accuracy: eval.report.accuracy,
            macro_f1: eval.report.macro_f1,
            size: te.len(),
        });
        gold.extend(eval.gold);
        predicted.extend(eval.predicted);
    }
    let mut report = MetricsReport::compute(&names, &gold, &predicted)?;
    if folds.len() > 1 {
        report = report.with_folds(fold_metrics);
    }
    write(&out.join("metrics.csv"), report.to_csv())?;
    write(&out.join("metrics.json"), report.to_json())?;
    Ok(report)
}

/// A trained model with everything needed to run it.
pub struct Loaded {
    pub dir: PathBuf,
    pub model: Model,
    pub params: ParamSet<f32>,
    pub dataset: Dataset,
    pub threads: Vec<Thread>,
    pub vocab: Vocabulary,
    pub run: RunConfig,
}

impl Loaded {
    /// Threads of the named split (`train`, `val`, `test` or `all`).
    pub fn split(&self, which: &str) -> Result<Vec<Thread>> {
        if which == "all" {
            return Ok(self.threads.clone());
        }
        let path = self.dir.join(SPLITS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let ids: SplitIds = serde_json::from_str(&text).map_err(|source| Error::Json { path, source })?;
        let wanted = match which {
            "train" => ids.train,
            "val" => ids.val,
            "test" => ids.test,
            other => return Err(Error::Config(format!("unknown split {other:?}"))),
        };
        let by_id: HashMap<&str, &Thread> = self.threads.iter().map(|t| (t.claim_id.as_str(), t)).collect();
        let mut out: Vec<Thread> = wanted
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|&t| t.clone())
                    .ok_or_else(|| Error::Data(format!("claim {id} from {SPLITS_FILE} is not in the data")))
            })
            .collect::<Result<_>>()?;
        if self.run.train.amend_unverified && self.dataset.is_twitter() {
            let split = if which == "test" { Split::Test } else { Split::Train };
            out = amend_unverified(out, split);
        }
        Ok(out)
    }
}

/// Loads a checkpoint (file or run directory) plus the data it was trained
/// on. `cfg.train.data` overrides the data directory recorded in the run.
pub fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Loaded> {
    let file = if path.is_dir() { path.join(CHECKPOINT_FILE) } else { path.to_path_buf() };
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let ck = checkpoint::load::<f32>(&file)?;
    let meta: CheckpointMeta = serde_json::from_str(&ck.metadata)
        .map_err(|e| Error::Checkpoint(format!("{}: bad metadata: {e}", file.display())))?;
    let (model, mut params) = Model::init::<f32>(meta.model.clone(), 0)?;
    params.load_from(&ck.entries)?;

    let run_config = [dir.join(CONFIG_FILE), dir.join("..").join(CONFIG_FILE)]
        .into_iter()
        .find(|p| p.is_file());
    let run = match run_config {
        Some(p) => RunConfig::load(Some(&p), &[])?,
        None => RunConfig::default(),
    };
    let mut data_cfg = run.clone();
    if cfg.train.data.is_some() {
        data_cfg.train.data = cfg.train.data.clone();
        data_cfg.data_root = cfg.data_root.clone();
    }
    let (threads, vocab) = data_and_vocab(&data_cfg)?;
    let dataset = common_dataset(&threads)?;
    if dataset.num_classes() != meta.model.k {
        return Err(Error::Config(format!(
            "checkpoint has {} classes but {dataset} has {}",
            meta.model.k,
            dataset.num_classes()
        )));
    }
    Ok(Loaded {
        dir,
        model,
        params,
        dataset,
        threads,
        vocab,
        run,
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport> {
    let ck = cfg
        .eval
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("eval.checkpoint is not set".into()))?;
    let loaded = load_checkpoint(cfg, ck)?;
    let which = cfg.eval.split.as_deref().unwrap_or("test");
    let threads = loaded.split(which)?;
    if threads.is_empty() {
        return Err(Error::Data(format!("split {which} is empty")));
    }
    let eval = evaluate(&loaded.model, &loaded.params, &threads, &loaded.vocab)?;
    let out = cfg.out.clone().unwrap_or_else(|| loaded.dir.join(format!("eval-{which}")));
    write(&out.join("metrics.csv"), eval.report.to_csv())?;
    write(&out.join("metrics.json"), eval.report.to_json())?;
    write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    Ok(eval.report)
}

pub fn cmd_explain(cfg: &RunConfig) -> Result<Vec<Explanation>> {
    let ck = cfg
        .explain
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config("explain.checkpoint is not set".into()))?;
    let loaded = load_checkpoint(cfg, ck)?;
    if cfg.explain.heatmap && !loaded.model.config.variant.hierarchical() {
        return Err(Error::Capability(format!(
            "token heatmaps need sta-hitplan, checkpoint is {}",
            loaded.model.config.variant
        )));
    }
    let threads = if cfg.explain.claims.is_empty() {
        loaded.split("test")?
    } else {
        let by_id: HashMap<&str, &Thread> = loaded.threads.iter().map(|t| (t.claim_id.as_str(), t)).collect();
        cfg.explain
            .claims
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|&t| t.clone())
                    .ok_or_else(|| Error::Data(format!("unknown claim {id}")))
            })
            .collect::<Result<_>>()?
    };
    let out = cfg.out.clone().unwrap_or_else(|| loaded.dir.join("explanations"));
    let mut all = Vec::with_capacity(threads.len());
    for t in &threads {
        let e = explain(&loaded.model, &loaded.params, t, &loaded.vocab)?;
        let stem = file_stem(&t.claim_id);
        write(&out.join(format!("{stem}.json")), e.to_json())?;
        if !e.heatmaps.is_empty() {
            write(&out.join(format!("{stem}.heatmap.csv")), e.heatmap_csv())?;
        }
        all.push(e);
    }
    write(&out.join(CONFIG_FILE), cfg.to_toml())?;
    Ok(all)
}

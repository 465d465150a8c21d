//! Training loop, evaluation, splits and metrics.

mod metrics;
mod splits;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{ClassMetrics, FoldMetrics, MetricsReport};
pub use splits::{make_splits, read_split_file, Fold, SplitMode, SplitPlan};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{AdamConfig, AdamState, Float, LrSchedule, ParamSet, Tape};
use crate::thread::{Dataset, Thread, Vocabulary};

fn default_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_peak_lr() -> f64 {
    0.01
}
fn default_warmup() -> u64 {
    6000
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.98
}
fn default_adam_eps() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without a validation macro F1 improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Defaults to 32, or 16 for StA-HiTPLAN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default = "default_peak_lr")]
    pub peak_lr: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: u64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// Global gradient-norm clip; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            schedule: LrSchedule {
                peak_lr: self.peak_lr,
                warmup_steps: self.warmup_steps,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.peak_lr > 0.0) {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
    pub steps: u64,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,lr,train_loss,val_macro_f1\n");
        for e in &self.log {
            writeln!(out, "{},{},{},{}", e.epoch, e.lr, e.train_loss, e.val_macro_f1).unwrap();
        }
        out
    }
}

/// Class names of the dataset shared by `threads`.
pub fn class_names(threads: &[Thread]) -> Result<Vec<&'static str>> {
    let dataset = common_dataset(threads)?;
    Ok(dataset.labels().iter().map(|l| l.name()).collect())
}

fn common_dataset(threads: &[Thread]) -> Result<Dataset> {
    let first = threads.first().ok_or_else(|| Error::Config("no threads".into()))?.dataset;
    if let Some(t) = threads.iter().find(|t| t.dataset != first) {
        return Err(Error::Data(format!("claim {} is {} but expected {first}", t.claim_id, t.dataset)));
    }
    Ok(first)
}

fn check_classes(model: &Model, threads: &[Thread]) -> Result<()> {
    let dataset = common_dataset(threads)?;
    if dataset.num_classes() != model.config.k {
        return Err(Error::Config(format!(
            "model has {} classes but {dataset} has {}",
            model.config.k,
            dataset.num_classes()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub gold: Vec<usize>,
    pub predicted: Vec<usize>,
}

pub fn evaluate<F: Float>(
    model: &Model,
    params: &ParamSet<F>,
    threads: &[Thread],
    vocab: &Vocabulary,
) -> Result<Evaluation> {
    check_classes(model, threads)?;
    let mut gold = Vec::with_capacity(threads.len());
    let mut predicted = Vec::with_capacity(threads.len());
    for t in threads {
        gold.push(t.class_index()?);
        predicted.push(model.predict(params, t, vocab)?.predicted());
    }
    let names = class_names(threads)?;
    let report = MetricsReport::compute(&names, &gold, &predicted)?;
    Ok(Evaluation { report, gold, predicted })
}

/// Mini-batch Adam on mean per-thread cross-entropy with early stopping on
/// validation macro F1. Training also ends once validation macro F1 reaches
/// 1, since it cannot improve further. On return `params` holds the best
/// validation epoch's weights.
#[allow(clippy::too_many_arguments)]
pub fn train<F: Float>(
    model: &Model,
    params: &mut ParamSet<F>,
    train_set: &[Thread],
    val_set: &[Thread],
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: Option<&mut dyn FnMut(&EpochLog)>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    check_classes(model, train_set)?;
    check_classes(model, val_set)?;
    let batch = cfg.batch_size.unwrap_or(model.config.variant.batch_size());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(params, cfg.adam());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best = (0usize, f64::NEG_INFINITY, params.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(batch) {
            params.zero_grad();
            for &i in chunk {
                let mut tape = Tape::with_params(params);
                let (loss, _) = model.loss(&mut tape, &train_set[i], vocab, Some(&mut rng))?;
                let value = tape.value(loss).item().as_f64();
                if !value.is_finite() {
                    return Err(Error::Data(format!(
                        "non-finite loss at epoch {epoch} on claim {}",
                        train_set[i].claim_id
                    )));
                }
                loss_sum += value;
                let grads = tape.backward(loss)?;
                params.accumulate(&grads);
            }
            params.scale_grads(1.0 / chunk.len() as f64);
            if let Some(c) = cfg.clip_norm {
                params.clip_grad_norm(c);
            }
            lr = adam.step(params)?;
        }
        params.zero_grad();
        let val_f1 = evaluate(model, params, val_set, vocab)?.report.macro_f1;
        let entry = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val_macro_f1: val_f1,
        };
        if let Some(cb) = on_epoch.as_mut() {
            cb(&entry);
        }
        log.push(entry);
        if val_f1 > best.1 {
            best = (epoch, val_f1, params.clone());
            stale = 0;
        } else {
            stale += 1;
        }
        if best.1 >= 1.0 || stale >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val_macro_f1, best_params) = best;
    *params = best_params;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val_macro_f1,
        steps: adam.step_count(),
    })
}

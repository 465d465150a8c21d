//! Run configuration: a TOML file with one section per command, overridden
//! by `section.key=value` assignments and command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Variant};
use crate::thread::Dataset;
use crate::train::{SplitMode, SplitPlan, TrainConfig};

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "PLAN_DATA_ROOT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Base for relative input paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub explain: ExplainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// Directory of raw thread documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Dataset>,
    /// Whitespace-separated word vectors; random vectors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Dimension of random vectors when no embeddings file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default = "yes")]
    pub remove_retweets: bool,
}

fn yes() -> bool {
    true
}

impl Default for PreprocessSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

/// Same keys as [`ModelConfig`]; `K` defaults to the dataset's class count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub use_time_delay: bool,
    #[serde(default = "d_s")]
    pub s: usize,
    #[serde(default = "d_s_word")]
    pub s_word: usize,
    #[serde(default = "d_model")]
    pub d_model: usize,
    #[serde(default = "d_ff")]
    pub d_ff: usize,
    #[serde(default = "d_h")]
    pub h: usize,
    #[serde(default, rename = "K", alias = "k", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "d_dropout")]
    pub dropout: f64,
    #[serde(default = "d_max_posts")]
    pub max_posts: usize,
    #[serde(default = "d_max_tokens")]
    pub max_tokens: usize,
}

fn default_variant() -> Variant {
    Variant::Plan
}
fn d_s() -> usize {
    12
}
fn d_s_word() -> usize {
    2
}
fn d_model() -> usize {
    300
}
fn d_ff() -> usize {
    600
}
fn d_h() -> usize {
    6
}
fn d_dropout() -> f64 {
    0.3
}
fn d_max_posts() -> usize {
    100
}
fn d_max_tokens() -> usize {
    50
}

impl Default for ModelSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl ModelSection {
    pub fn resolve(&self, dataset: Dataset) -> Result<ModelConfig> {
        let k = self.k.unwrap_or(dataset.num_classes());
        if k != dataset.num_classes() {
            return Err(Error::Config(format!(
                "K = {k} but {dataset} has {} classes",
                dataset.num_classes()
            )));
        }
        let cfg = ModelConfig {
            variant: self.variant,
            use_time_delay: self.use_time_delay,
            s: self.s,
            s_word: self.s_word,
            d_model: self.d_model,
            d_ff: self.d_ff,
            h: self.h,
            k,
            dropout: self.dropout,
            max_posts: self.max_posts,
            max_tokens: self.max_tokens,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Processed data directory written by `preprocess`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Relabel or drop threads left with a single post (Twitter data only).
    #[serde(default = "yes")]
    pub amend_unverified: bool,
    #[serde(flatten)]
    pub optim: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_mode")]
    pub mode: SplitMode,
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    #[serde(default = "default_test")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
}

fn default_mode() -> SplitMode {
    SplitMode::Random
}
fn default_val() -> f64 {
    0.1
}
fn default_test() -> f64 {
    0.2
}

impl Default for SplitSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// `test`, `val`, `train` or `all`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub claims: Vec<String>,
    /// Require token heatmaps (fails for models without token attention).
    #[serde(default)]
    pub heatmap: bool,
}

impl RunConfig {
    /// Parses TOML text after applying `key=value` overrides, where keys
    /// may be dotted (`train.epochs=5`) and values are TOML literals or
    /// bare strings.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        let mut cfg = RunConfig::from_toml(&text, overrides)?;
        if cfg.data_root.is_none() {
            cfg.data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        }
        Ok(cfg)
    }

    /// Resolves an input path against the data root.
    pub fn input_path(&self, p: &Path) -> PathBuf {
        match &self.data_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn split_plan(&self) -> SplitPlan {
        SplitPlan {
            mode: self.split.mode,
            seed: self.seed,
            val_fraction: self.split.val_fraction,
            test_fraction: self.split.test_fraction,
            train_file: self.split.train_file.as_deref().map(|p| self.input_path(p)),
            test_file: self.split.test_file.as_deref().map(|p| self.input_path(p)),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("expected key=value, got {assignment:?}")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Usage(format!("empty key in {assignment:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Usage(format!("{p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_sections() {
        let c = RunConfig::from_toml("", &[]).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.model.d_model, 300);
        assert_eq!(c.train.optim, TrainConfig::default());
        assert_eq!(c.split.mode, SplitMode::Random);
        assert_eq!(c, RunConfig::default());
        assert!(c.train.amend_unverified && c.preprocess.remove_retweets);

        let c = RunConfig::from_toml(
            "seed = 7\n[model]\nvariant = \"sta-hitplan\"\nK = 3\n[train]\nepochs = 4\nclip_norm = 1.0\n[split]\nmode = \"event-cv\"\n",
            &[],
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.variant, Variant::StaHitPlan);
        assert_eq!(c.train.optim.epochs, 4);
        assert_eq!(c.train.optim.clip_norm, Some(1.0));
        assert_eq!(c.split.mode, SplitMode::EventCv);
        assert_eq!(c.model.resolve(Dataset::Pheme).unwrap().k, 3);
        assert!(matches!(c.model.resolve(Dataset::Twitter15), Err(Error::Config(_))));
    }

    #[test]
    fn overrides() {
        let c = RunConfig::from_toml(
            "[train]\nepochs = 4\n",
            &["train.epochs=9".into(), "model.variant=sta-plan".into(), "seed=3".into(), "model.use_time_delay=true".into()],
        )
        .unwrap();
        assert_eq!(c.train.optim.epochs, 9);
        assert_eq!(c.model.variant, Variant::StaPlan);
        assert_eq!(c.seed, 3);
        assert!(c.model.use_time_delay);
        assert!(RunConfig::from_toml("", &["nokey".into()]).is_err());
        assert!(RunConfig::from_toml("", &["model.bogus=1".into()]).is_err());
    }

    #[test]
    fn roundtrip() {
        let mut c = RunConfig::from_toml("[model]\nK = 4\n", &[]).unwrap();
        c.out = Some("runs/a".into());
        c.train.data = Some("proc".into());
        let back = RunConfig::from_toml(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn data_root() {
        let c = RunConfig {
            data_root: Some("/data".into()),
            ..RunConfig::default()
        };
        assert_eq!(c.input_path(Path::new("t15")), PathBuf::from("/data/t15"));
        assert_eq!(c.input_path(Path::new("/abs")), PathBuf::from("/abs"));
    }
}

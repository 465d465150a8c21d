//! Browser demo: relation matrices, time-delay encodings, and a small model
//! trained in the page on a synthetic marker corpus and then explained.
//!
//! Threads are typed one post per line as `id parent minutes text...`,
//! with `-` as the parent of the source post.

use plan::attention::tde;
use plan::explain::explain;
use plan::model::{Model, ModelConfig, Variant};
use plan::synth::marker_corpus;
use plan::tensor::ParamSet;
use plan::thread::{time_bin, tokenize, Dataset, Post, Thread, Veracity, Vocabulary};
use plan::train::{train, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const CORPUS_SIZE: usize = 40;
const DEMO_DIM: usize = 16;

pub fn parse_thread_text(text: &str) -> Result<Thread, String> {
    let mut posts = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(id), Some(parent), Some(minutes)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected `id parent minutes text`", n + 1));
        };
        let latency: f64 = minutes.parse().map_err(|_| format!("line {}: bad minutes {minutes:?}", n + 1))?;
        posts.push(Post {
            id: id.to_string(),
            parent_id: (parent != "-").then(|| parent.to_string()),
            text: parts.collect::<Vec<_>>().join(" "),
            latency_minutes: latency,
            token_ids: Vec::new(),
            is_source: parent == "-",
            retweet: false,
        });
    }
    if posts.is_empty() {
        return Err("no posts".into());
    }
    Thread::from_posts("demo".into(), Veracity::NonRumor, Dataset::Twitter15, None, posts).map_err(|e| e.to_string())
}

/// Chronological post order, relation codes and time bins of a typed thread.
pub fn relations_json(text: &str) -> Result<String, String> {
    let t = parse_thread_text(text)?;
    Ok(json!({
        "posts": t.posts.iter().map(|p| &p.id).collect::<Vec<_>>(),
        "rows": t.relations.rows(),
        "bins": t.time_bins,
    })
    .to_string())
}

pub fn time_delay_json(minutes: f64, dim: usize) -> Result<String, String> {
    let bin = time_bin(minutes).map_err(|e| e.to_string())?;
    let vector = tde(bin as usize, dim).map_err(|e| e.to_string())?;
    Ok(json!({ "bin": bin, "vector": vector }).to_string())
}

fn thread_to_text(t: &Thread) -> String {
    t.posts
        .iter()
        .map(|p| format!("{} {} {} {}", p.id, p.parent_id.as_deref().unwrap_or("-"), p.latency_minutes, p.text))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
    f1: f64,
}

/// A small model of one variant trained on the marker corpus, where the
/// label is the `markerK` token carried by some replies.
pub struct Demo {
    model: Model,
    params: ParamSet<f32>,
    vocab: Vocabulary,
    corpus: Vec<Thread>,
    seed: u64,
}

impl Demo {
    pub fn create(variant: &str, seed: u64) -> Result<Demo, String> {
        let variant: Variant = variant.parse().map_err(|e: plan::Error| e.to_string())?;
        let corpus = marker_corpus(&mut ChaCha8Rng::seed_from_u64(seed), CORPUS_SIZE, Dataset::Twitter15);
        let tokens: Vec<String> = corpus
            .iter()
            .flat_map(|t| t.posts.iter().flat_map(|p| tokenize(&p.text)))
            .collect();
        let vocab = Vocabulary::random(tokens.iter().map(String::as_str), DEMO_DIM, seed);
        let cfg = ModelConfig {
            s: 2,
            s_word: 1,
            d_model: DEMO_DIM,
            d_ff: 2 * DEMO_DIM,
            h: 2,
            dropout: 0.1,
            ..ModelConfig::new(variant, Dataset::Twitter15.num_classes())
        };
        let (model, params) = Model::init(cfg, seed).map_err(|e| e.to_string())?;
        Ok(Demo {
            model,
            params,
            vocab,
            corpus,
            seed,
        })
    }

    /// Trains up to `epochs` more epochs and returns the epoch log.
    pub fn fit(&mut self, epochs: usize) -> Result<String, String> {
        let cfg = TrainConfig {
            epochs,
            patience: epochs,
            warmup_steps: 50,
            ..TrainConfig::default()
        };
        let out = train(&self.model, &mut self.params, &self.corpus, &self.corpus, &self.vocab, &cfg, self.seed, None)
            .map_err(|e| e.to_string())?;
        let rows: Vec<EpochRow> = out
            .log
            .iter()
            .map(|e| EpochRow {
                epoch: e.epoch,
                loss: e.train_loss,
                f1: e.val_macro_f1,
            })
            .collect();
        Ok(serde_json::to_string(&rows).unwrap())
    }

    pub fn sample(&self, index: usize) -> String {
        thread_to_text(&self.corpus[index % self.corpus.len()])
    }

    /// Prediction, pooling weights, last-layer attention (heads averaged)
    /// and the explanation of a typed thread.
    pub fn explain_text(&self, text: &str) -> Result<String, String> {
        let mut thread = parse_thread_text(text)?;
        thread.tokenize_with(&self.vocab);
        let out = self.model.predict(&self.params, &thread, &self.vocab).map_err(|e| e.to_string())?;
        let e = explain(&self.model, &self.params, &thread, &self.vocab).map_err(|e| e.to_string())?;
        let last = out.trace.num_layers() - 1;
        Ok(json!({
            "posts": thread.posts.iter().map(|p| &p.id).collect::<Vec<_>>(),
            "texts": thread.posts.iter().map(|p| &p.text).collect::<Vec<_>>(),
            "pooling": out.trace.pooling,
            "attention": out.trace.head_mean(last),
            "explanation": e,
        })
        .to_string())
    }
}

#[wasm_bindgen]
pub fn relations(text: &str) -> Result<String, JsError> {
    relations_json(text).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn time_delay(minutes: f64, dim: usize) -> Result<String, JsError> {
    time_delay_json(minutes, dim).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct DemoModel(Demo);

#[wasm_bindgen]
impl DemoModel {
    #[wasm_bindgen(constructor)]
    pub fn new(variant: &str, seed: u32) -> Result<DemoModel, JsError> {
        Demo::create(variant, seed as u64).map(DemoModel).map_err(|e| JsError::new(&e))
    }

    pub fn train(&mut self, epochs: usize) -> Result<String, JsError> {
        self.0.fit(epochs).map_err(|e| JsError::new(&e))
    }

    pub fn sample(&self, index: usize) -> String {
        self.0.sample(index)
    }

    pub fn explain(&self, text: &str) -> Result<String, JsError> {
        self.0.explain_text(text).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const TREE: &str = "a - 0 is this real\nb a 12 no it is fake\nc a 3 source please\nd b 30 agreed";

    #[test]
    fn parses_and_orders_posts() {
        let v: Value = serde_json::from_str(&relations_json(TREE).unwrap()).unwrap();
        assert_eq!(v["posts"], json!(["a", "c", "b", "d"]));
        assert_eq!(v["bins"], json!([0, 0, 1, 3]));
        assert_eq!(v["rows"][0].as_str().unwrap().chars().next(), Some('S'));
        assert!(parse_thread_text("").is_err());
        assert!(parse_thread_text("a - soon hi").is_err());
        assert!(parse_thread_text("a - 0 hi\nb zzz 1 orphan").is_err());
    }

    #[test]
    fn time_delay_vector() {
        let v: Value = serde_json::from_str(&time_delay_json(2000.0, 8).unwrap()).unwrap();
        assert_eq!(v["bin"], 99);
        assert_eq!(v["vector"].as_array().unwrap().len(), 8);
        assert!(time_delay_json(-1.0, 8).is_err());
    }

    #[test]
    fn demo_trains_and_explains() {
        let mut demo = Demo::create("sta-hitplan", 1).unwrap();
        let log: Vec<Value> = serde_json::from_str(&demo.fit(3).unwrap()).unwrap();
        assert!(!log.is_empty());
        let sample = demo.sample(2);
        let v: Value = serde_json::from_str(&demo.explain_text(&sample).unwrap()).unwrap();
        let n = v["posts"].as_array().unwrap().len();
        assert_eq!(v["attention"].as_array().unwrap().len(), n * n);
        assert!(!v["explanation"]["heatmaps"].as_array().unwrap().is_empty());
        assert!(Demo::create("lstm", 1).is_err());
    }
}

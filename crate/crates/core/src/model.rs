//! End-to-end thread classifiers: PLAN, StA-PLAN and StA-HiTPLAN, each with
//! an optional time-delay embedding.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attn_pool, classify, tde, AttentionTrace, MhaLayer, RelInput, RelationEmbeddings};
use crate::error::{Error, Result};
use crate::tensor::kernels::{argmax, sinusoid};
use crate::tensor::{Float, ParamId, ParamSet, Tape, Tensor, Var};
use crate::thread::{Thread, Vocabulary, PAD, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "plan", alias = "PLAN")]
    Plan,
    #[serde(rename = "sta-plan", alias = "StA-PLAN")]
    StaPlan,
    #[serde(rename = "sta-hitplan", alias = "StA-HiTPLAN")]
    StaHitPlan,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Plan, Variant::StaPlan, Variant::StaHitPlan];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plan => "plan",
            Variant::StaPlan => "sta-plan",
            Variant::StaHitPlan => "sta-hitplan",
        }
    }

    pub fn structure_aware(self) -> bool {
        self != Variant::Plan
    }

    pub fn hierarchical(self) -> bool {
        self == Variant::StaHitPlan
    }

    /// Default training batch size for the variant.
    pub fn batch_size(self) -> usize {
        if self.hierarchical() {
            16
        } else {
            32
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plan" => Ok(Variant::Plan),
            "sta-plan" | "staplan" => Ok(Variant::StaPlan),
            "sta-hitplan" | "stahitplan" | "hitplan" => Ok(Variant::StaHitPlan),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

fn default_max_posts() -> usize {
    100
}

fn default_max_tokens() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub use_time_delay: bool,
    /// Post-level layers.
    pub s: usize,
    /// Token-level layers (StA-HiTPLAN only).
    pub s_word: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub h: usize,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub dropout: f64,
    /// Posts beyond this many (in chronological order) are dropped.
    #[serde(default = "default_max_posts")]
    pub max_posts: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, k: usize) -> Self {
        ModelConfig {
            variant,
            use_time_delay: false,
            s: 12,
            s_word: 2,
            d_model: 300,
            d_ff: 600,
            h: 6,
            k,
            dropout: 0.3,
            max_posts: default_max_posts(),
            max_tokens: default_max_tokens(),
        }
    }

    /// Small dimensions for tests and demos.
    pub fn tiny(variant: Variant, k: usize) -> Self {
        ModelConfig {
            s: 2,
            s_word: 1,
            d_model: 8,
            d_ff: 12,
            h: 2,
            dropout: 0.0,
            ..ModelConfig::new(variant, k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.s == 0 {
            return fail("s must be at least 1".into());
        }
        if self.variant.hierarchical() && self.s_word == 0 {
            return fail("s_word must be at least 1 for sta-hitplan".into());
        }
        if !(3..=4).contains(&self.k) {
            return fail(format!("K must be 3 or 4, got {}", self.k));
        }
        if self.d_model == 0 || self.d_ff == 0 {
            return fail("d_model and d_ff must be positive".into());
        }
        if self.h == 0 || !self.d_model.is_multiple_of(self.h) {
            return fail(format!("d_model {} not divisible by h {}", self.d_model, self.h));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.max_posts == 0 || self.max_tokens == 0 {
            return fail("max_posts and max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Probabilities plus every attention weight needed for explanations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelOutput {
    pub p: Vec<f64>,
    pub trace: AttentionTrace,
    /// Token pooling weights per post (StA-HiTPLAN only).
    pub token_traces: Option<Vec<Vec<f64>>>,
}

impl ModelOutput {
    pub fn predicted(&self) -> usize {
        argmax(&self.p).unwrap_or(0)
    }
}

/// Handles to the nodes of one recorded forward pass.
pub struct Recorded {
    pub n: usize,
    pub logits: Var,
    pub p: Var,
    pub layers: Vec<Vec<Var>>,
    pub pooling: Var,
    pub token_pooling: Vec<Var>,
}

impl Recorded {
    pub fn output<F: Float>(&self, tape: &Tape<'_, F>) -> ModelOutput {
        let vals = |v: Var| tape.value(v).to_f64_vec();
        ModelOutput {
            p: vals(self.p),
            trace: AttentionTrace {
                n: self.n,
                layers: self.layers.iter().map(|l| l.iter().map(|&a| vals(a)).collect()).collect(),
                pooling: vals(self.pooling),
            },
            token_traces: if self.token_pooling.is_empty() {
                None
            } else {
                Some(self.token_pooling.iter().map(|&a| vals(a)).collect())
            },
        }
    }
}

/// Per-dimension max over the token rows of one post.
pub fn sentence_embed_maxpool<F: Float>(tape: &mut Tape<'_, F>, tokens: Var) -> Result<Var> {
    tape.max_pool_rows(tokens)
}

/// Token-position encodings, token-level attention layers, then attention
/// pooling with `gamma_word`. Returns the `[1×d]` embedding and the token
/// pooling weights.
pub fn sentence_embed_hierarchical<F: Float>(
    tape: &mut Tape<'_, F>,
    tokens: Var,
    layers: &[MhaLayer],
    gamma_word: Var,
    dropout: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<(Var, Var)> {
    let (t, d) = (tape.value(tokens).rows(), tape.value(tokens).cols());
    let pe: Vec<f64> = (0..t).flat_map(|i| sinusoid(i, d)).collect();
    let pe = tape.constant(Tensor::from_f64(&[t, d], &pe)?);
    let mut x = tape.add(tokens, pe)?;
    for layer in layers {
        x = layer
            .forward(tape, x, None, None, dropout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?
            .x;
    }
    attn_pool(tape, x, gamma_word)
}

/// Parameter layout of a model. Values live in a separate [`ParamSet`] so
/// the same layout can drive many tapes.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub unk: ParamId,
    pub token_layers: Vec<MhaLayer>,
    pub token_gamma: Option<ParamId>,
    pub post_layers: Vec<MhaLayer>,
    pub gamma: ParamId,
    pub cls_w: ParamId,
    pub cls_b: ParamId,
    pub rel: Option<RelationEmbeddings>,
}

impl Model {
    /// Registers parameters in a fixed order. Relation tables come last, so
    /// PLAN and StA-PLAN built from the same seed share every other weight.
    pub fn new<F: Float>(config: ModelConfig, params: &mut ParamSet<F>, rng: &mut impl Rng) -> Result<Model> {
        config.validate()?;
        let d = config.d_model;
        let unk = params.add_uniform("embed.unk", &[d], 0.1, rng);
        let mut token_layers = Vec::new();
        let mut token_gamma = None;
        if config.variant.hierarchical() {
            for l in 0..config.s_word {
                token_layers.push(MhaLayer::new(params, &format!("token.layer{l}"), d, config.d_ff, config.h, rng)?);
            }
            token_gamma = Some(params.add_uniform("token.gamma", &[1, d], 1.0 / (d as f64).sqrt(), rng));
        }
        let post_layers = (0..config.s)
            .map(|l| MhaLayer::new(params, &format!("post.layer{l}"), d, config.d_ff, config.h, rng))
            .collect::<Result<Vec<_>>>()?;
        let gamma = params.add_uniform("pool.gamma", &[1, d], 1.0 / (d as f64).sqrt(), rng);
        let cls_w = params.add_xavier("cls.w", d, config.k, rng);
        let cls_b = params.add_filled("cls.b", &[config.k], 0.0);
        let rel = config
            .variant
            .structure_aware()
            .then(|| RelationEmbeddings::new(params, d / config.h, rng));
        Ok(Model {
            config,
            unk,
            token_layers,
            token_gamma,
            post_layers,
            gamma,
            cls_w,
            cls_b,
            rel,
        })
    }

    /// Fresh model and parameters from a seed.
    pub fn init<F: Float>(config: ModelConfig, seed: u64) -> Result<(Model, ParamSet<F>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let model = Model::new(config, &mut params, &mut rng)?;
        Ok((model, params))
    }

    /// Token ids of post `i`, capped at `max_tokens`.
    fn token_ids(&self, thread: &Thread, i: usize, vocab: &Vocabulary) -> Vec<usize> {
        let post = &thread.posts[i];
        let mut ids = if post.token_ids.is_empty() {
            vocab.encode(&post.text)
        } else {
            post.token_ids.clone()
        };
        ids.truncate(self.config.max_tokens);
        ids
    }

    fn token_matrix<F: Float>(&self, tape: &mut Tape<'_, F>, ids: &[usize], vocab: &Vocabulary) -> Result<Var> {
        let d = self.config.d_model;
        let mut data = Vec::with_capacity(ids.len() * d);
        let mut unknown = Vec::new();
        for (pos, &id) in ids.iter().enumerate() {
            if id >= vocab.len() {
                return Err(Error::Data(format!("token id {id} outside vocabulary of {}", vocab.len())));
            }
            if id == UNK || id == PAD {
                unknown.push(pos);
            }
            data.extend(vocab.vector(id).iter().map(|&x| F::of(x as f64)));
        }
        let base = tape.constant(Tensor::new(vec![ids.len(), d], data)?);
        if unknown.is_empty() {
            return Ok(base);
        }
        let unk = tape.param(self.unk);
        tape.add_rows_at(base, unk, &unknown)
    }

    /// Records a forward pass. Dropout is active only when `rng` is given.
    pub fn record<F: Float>(
        &self,
        tape: &mut Tape<'_, F>,
        thread: &Thread,
        vocab: &Vocabulary,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Recorded> {
        let cfg = &self.config;
        if thread.posts.is_empty() {
            return Err(Error::Data(format!("thread {} has no posts", thread.claim_id)));
        }
        if vocab.dim() != cfg.d_model {
            return Err(Error::Config(format!(
                "embedding dimension {} does not match d_model {}",
                vocab.dim(),
                cfg.d_model
            )));
        }
        let n = thread.len().min(cfg.max_posts);
        let dropout = if rng.is_some() { cfg.dropout } else { 0.0 };

        let mut sentences = Vec::with_capacity(n);
        let mut token_pooling = Vec::new();
        for i in 0..n {
            let ids = self.token_ids(thread, i, vocab);
            let tokens = self.token_matrix(tape, &ids, vocab)?;
            let x = match self.token_gamma {
                Some(g) => {
                    let g = tape.param(g);
                    let (x, alpha) = sentence_embed_hierarchical(
                        tape,
                        tokens,
                        &self.token_layers,
                        g,
                        dropout,
                        rng.as_mut().map(|r| &mut **r as &mut dyn RngCore),
                    )?;
                    token_pooling.push(alpha);
                    x
                }
                None => sentence_embed_maxpool(tape, tokens)?,
            };
            sentences.push(x);
        }
        let mut x = tape.concat_rows(&sentences)?;
        if cfg.use_time_delay {
            if thread.time_bins.len() < n {
                return Err(Error::Data(format!("thread {} lacks time bins", thread.claim_id)));
            }
            let mut pe = Vec::with_capacity(n * cfg.d_model);
            for &b in &thread.time_bins[..n] {
                pe.extend(tde(b as usize, cfg.d_model)?);
            }
            let pe = tape.constant(Tensor::from_f64(&[n, cfg.d_model], &pe)?);
            x = tape.add(x, pe)?;
        }

        let labels = match self.rel {
            Some(_) => {
                if thread.relations.len() < n {
                    return Err(Error::Data(format!("thread {} lacks a relation matrix", thread.claim_id)));
                }
                Some(thread.relations.truncate(n).indices())
            }
            None => None,
        };
        let tables = self.rel.map(|r| (tape.param(r.key), tape.param(r.value)));

        let mut layers = Vec::with_capacity(cfg.s);
        for layer in &self.post_layers {
            let rel = match (&labels, tables) {
                (Some(l), Some((key, value))) => Some(RelInput { labels: l, key, value }),
                _ => None,
            };
            let out = layer.forward(tape, x, None, rel, dropout, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
            x = out.x;
            layers.push(out.attention);
        }
        let gamma = tape.param(self.gamma);
        let (v, pooling) = attn_pool(tape, x, gamma)?;
        let (w, b) = (tape.param(self.cls_w), tape.param(self.cls_b));
        let (logits, p) = classify(tape, v, w, b)?;
        Ok(Recorded {
            n,
            logits,
            p,
            layers,
            pooling,
            token_pooling,
        })
    }

    /// Inference without dropout.
    pub fn predict<F: Float>(&self, params: &ParamSet<F>, thread: &Thread, vocab: &Vocabulary) -> Result<ModelOutput> {
        let mut tape = Tape::with_params(params);
        let rec = self.record(&mut tape, thread, vocab, None)?;
        Ok(rec.output(&tape))
    }

    /// Cross-entropy of the thread's label.
    pub fn loss<F: Float>(
        &self,
        tape: &mut Tape<'_, F>,
        thread: &Thread,
        vocab: &Vocabulary,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Var, Recorded)> {
        let target = thread.class_index()?;
        if target >= self.config.k {
            return Err(Error::Label {
                label: target,
                classes: self.config.k,
            });
        }
        let rec = self.record(tape, thread, vocab, rng)?;
        let loss = tape.softmax_cross_entropy(rec.logits, target)?;
        Ok((loss, rec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_thread;
    use crate::thread::tokenize;
    use crate::thread::Dataset;

    fn vocab_for(threads: &[Thread], dim: usize) -> Vocabulary {
        let tokens: Vec<String> = threads.iter().flat_map(|t| t.posts.iter().flat_map(|p| tokenize(&p.text))).collect();
        Vocabulary::random(tokens.iter().map(String::as_str), dim, 11)
    }

    fn sample(seed: u64, n: usize) -> Thread {
        random_thread(&mut ChaCha8Rng::seed_from_u64(seed), n, Dataset::Twitter15)
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(Variant::Plan, 4).validate().is_ok());
        let mut c = ModelConfig::new(Variant::StaHitPlan, 3);
        c.s_word = 0;
        assert!(c.validate().is_err());
        c = ModelConfig::new(Variant::Plan, 5);
        assert!(c.validate().is_err());
        c = ModelConfig::new(Variant::Plan, 4);
        c.h = 7;
        assert!(c.validate().is_err());
        assert_eq!("StA-HiTPLAN".parse::<Variant>().unwrap(), Variant::StaHitPlan);
        let toml_cfg: ModelConfig = toml::from_str(
            "variant = \"sta-plan\"\nuse_time_delay = true\ns = 3\ns_word = 1\nd_model = 12\nd_ff = 6\nh = 3\nK = 3\ndropout = 0.1\n",
        )
        .unwrap();
        assert_eq!(toml_cfg.variant, Variant::StaPlan);
        assert_eq!(toml_cfg.max_posts, 100);
    }

    #[test]
    fn maxpool_embedding() {
        let mut tape = Tape::<f64>::new();
        let one = tape.constant(Tensor::row(&[0.5, -1.0]));
        let e = sentence_embed_maxpool(&mut tape, one).unwrap();
        assert_eq!(tape.value(e).data(), &[0.5, -1.0]);
        let dup = tape.constant(Tensor::from_rows(&[&[0.5, -1.0], &[0.5, -1.0]]));
        let e = sentence_embed_maxpool(&mut tape, dup).unwrap();
        assert_eq!(tape.value(e).data(), &[0.5, -1.0]);
        let rows: [&[f64]; 3] = [&[1.0, -2.0, 0.0], &[-1.0, 3.0, -0.5], &[0.2, 0.1, -4.0]];
        let m = tape.constant(Tensor::from_rows(&rows));
        let e = sentence_embed_maxpool(&mut tape, m).unwrap();
        let want: Vec<f64> = (0..3).map(|c| rows.iter().map(|r| r[c]).fold(f64::MIN, f64::max)).collect();
        assert_eq!(tape.value(e).data(), want.as_slice());
    }

    fn layer_norm_row(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        x.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect()
    }

    #[test]
    fn hierarchical_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::<f64>::new();
        let layers: Vec<MhaLayer> = (0..2)
            .map(|l| MhaLayer::new(&mut params, &format!("t{l}"), 6, 8, 2, &mut rng).unwrap())
            .collect();
        let gamma = params.add_uniform("g", &[1, 6], 0.5, &mut rng);

        for t in [1, 4, 9] {
            let toks = Tensor::new(vec![t, 6], (0..t * 6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let mut tape = Tape::with_params(&params);
            let x = tape.constant(toks);
            let g = tape.param(gamma);
            let (e, alpha) = sentence_embed_hierarchical(&mut tape, x, &layers, g, 0.0, None).unwrap();
            assert_eq!(tape.shape(e), &[1, 6]);
            assert_eq!(tape.value(alpha).numel(), t);
            if t == 1 {
                assert_eq!(tape.value(alpha).data(), &[1.0]);
            }
        }

        // Zeroed projections reduce each block to its layer norms; with a zero
        // pooling vector the output is the mean of the normalised rows.
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_string();
            if !name.contains("gain") {
                params.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let t = 5;
        let raw: Vec<f64> = (0..t * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::with_params(&params);
        let x = tape.constant(Tensor::new(vec![t, 6], raw.clone()).unwrap());
        let g = tape.param(gamma);
        let (e, alpha) = sentence_embed_hierarchical(&mut tape, x, &layers, g, 0.0, None).unwrap();
        assert!(tape.value(alpha).data().iter().all(|&a| (a - 0.2).abs() < 1e-15));
        let mut mean = [0.0; 6];
        for i in 0..t {
            let pe = sinusoid(i, 6);
            let row: Vec<f64> = (0..6).map(|c| raw[i * 6 + c] + pe[c]).collect();
            let mut r = row;
            for _ in 0..4 {
                r = layer_norm_row(&r);
            }
            mean.iter_mut().zip(&r).for_each(|(m, v)| *m += v / t as f64);
        }
        for (got, want) in tape.value(e).data().iter().zip(mean) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn forward_shapes_for_every_variant() {
        for variant in Variant::ALL {
            for tdelay in [false, true] {
                let mut cfg = ModelConfig::tiny(variant, 4);
                cfg.use_time_delay = tdelay;
                let (model, params) = Model::init::<f64>(cfg.clone(), 3).unwrap();
                for n in [1, 2, 7] {
                    let t = sample(n as u64, n);
                    let vocab = vocab_for(std::slice::from_ref(&t), cfg.d_model);
                    let out = model.predict(&params, &t, &vocab).unwrap();
                    assert_eq!(out.p.len(), 4);
                    assert!((out.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert_eq!(out.trace.layers.len(), cfg.s);
                    assert!(out.trace.layers.iter().all(|l| l.len() == cfg.h && l.iter().all(|a| a.len() == n * n)));
                    assert_eq!(out.trace.pooling.len(), n);
                    assert_eq!(out.token_traces.is_some(), variant.hierarchical());
                }
            }
        }
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let cfg = ModelConfig::tiny(Variant::StaHitPlan, 3);
        let (model, mut params) = Model::init::<f64>(cfg, 0).unwrap();
        for id in params.ids().collect::<Vec<_>>() {
            params.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
        let t = sample(2, 5);
        let out = model.predict(&params, &t, &vocab_for(std::slice::from_ref(&t), 8)).unwrap();
        for p in out.p {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_is_permutation_invariant() {
        let cfg = ModelConfig::tiny(Variant::Plan, 4);
        let (model, params) = Model::init::<f64>(cfg, 5).unwrap();
        let t = sample(9, 6);
        let vocab = vocab_for(std::slice::from_ref(&t), 8);
        let base = model.predict(&params, &t, &vocab).unwrap();
        let order = [4, 2, 0, 5, 1, 3];
        let out = model.predict(&params, &t.permuted(&order), &vocab).unwrap();
        for (a, b) in base.p.iter().zip(&out.p) {
            assert!((a - b).abs() < 1e-12);
        }
        for (k, &o) in order.iter().enumerate() {
            assert!((out.trace.pooling[k] - base.trace.pooling[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_posts_in_one_bin_pool_uniformly() {
        let mut t = sample(4, 4);
        for p in &mut t.posts {
            p.text = "same words here".into();
            p.latency_minutes = 0.0;
        }
        let t = Thread::from_posts(t.claim_id, t.label, t.dataset, None, t.posts).unwrap();
        let mut cfg = ModelConfig::tiny(Variant::Plan, 4);
        cfg.use_time_delay = true;
        let (model, params) = Model::init::<f64>(cfg, 8).unwrap();
        let out = model.predict(&params, &t, &vocab_for(std::slice::from_ref(&t), 8)).unwrap();
        assert!(out.trace.pooling.iter().all(|a| (a - 0.25).abs() < 1e-12));
    }

    #[test]
    fn every_parameter_receives_gradient() {
        for variant in Variant::ALL {
            let mut cfg = ModelConfig::tiny(variant, 4);
            cfg.use_time_delay = true;
            let (model, params) = Model::init::<f64>(cfg, 13).unwrap();
            let mut t = sample(21, 6);
            let vocab = vocab_for(std::slice::from_ref(&t), 8);
            // a post made only of out-of-vocabulary tokens
            t.posts[2].text = "qqqq".into();
            let mut tape = Tape::with_params(&params);
            let (loss, _) = model.loss(&mut tape, &t, &vocab, None).unwrap();
            let grads = tape.backward(loss).unwrap();
            for (id, name, _) in params.iter() {
                let g = grads.param(id).unwrap_or_else(|| panic!("{variant}: no gradient for {name}"));
                assert!(g.iter().any(|&x| x != 0.0), "{variant}: zero gradient for {name}");
            }
        }
    }

    #[test]
    fn dropout_is_seeded() {
        let mut cfg = ModelConfig::tiny(Variant::StaPlan, 4);
        cfg.dropout = 0.3;
        let (model, params) = Model::init::<f64>(cfg, 1).unwrap();
        let t = sample(3, 5);
        let vocab = vocab_for(std::slice::from_ref(&t), 8);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tape = Tape::with_params(&params);
            let rec = model.record(&mut tape, &t, &vocab, Some(&mut rng)).unwrap();
            rec.output(&tape)
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn errors() {
        let (model, params) = Model::init::<f64>(ModelConfig::tiny(Variant::Plan, 4), 0).unwrap();
        let t = sample(1, 3);
        assert!(matches!(model.predict(&params, &t, &Vocabulary::empty(5)), Err(Error::Config(_))));
        let mut empty = t.clone();
        empty.posts.clear();
        assert!(matches!(model.predict(&params, &empty, &Vocabulary::empty(8)), Err(Error::Data(_))));
    }
}

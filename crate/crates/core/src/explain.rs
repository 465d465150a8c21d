//! Post- and token-level explanations read off attention traces.

use std::fmt::Write as _;

use serde::Serialize;

use crate::attention::AttentionTrace;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::kernels::argmax;
use crate::tensor::{Float, ParamSet};
use crate::thread::{tokenize, Thread, Vocabulary, UNK_TOKEN};

/// Number of relevant posts reported.
pub const TOP_RELEVANT: usize = 3;

/// Post with the largest final pooling weight; the earliest wins ties.
pub fn important_post(trace: &AttentionTrace) -> usize {
    argmax(&trace.pooling).unwrap_or(0)
}

/// One vote per layer for the post that `impt` attends to most (heads
/// averaged, `impt` itself excluded). Returns `(post, votes)` for every post
/// that received a vote, most votes first and earlier posts first on ties.
pub fn relevant_posts(trace: &AttentionTrace, impt: usize) -> Vec<(usize, usize)> {
    let n = trace.n;
    if n < 2 {
        return Vec::new();
    }
    let mut votes = vec![0usize; n];
    for l in 0..trace.num_layers() {
        let mean = trace.head_mean(l);
        let row = &mean[impt * n..(impt + 1) * n];
        let mut best: Option<usize> = None;
        for j in (0..n).filter(|&j| j != impt) {
            if best.is_none_or(|b| row[j] > row[b]) {
                best = Some(j);
            }
        }
        votes[best.unwrap()] += 1;
    }
    let mut ranked: Vec<(usize, usize)> = votes.into_iter().enumerate().filter(|&(_, v)| v > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Token pooling weights of `post`, normalised to sum to 1.
pub fn token_heatmap(token_traces: Option<&[Vec<f64>]>, post: usize) -> Result<Vec<f64>> {
    let traces = token_traces
        .ok_or_else(|| Error::Capability("token heatmaps need a model with token-level attention".into()))?;
    let w = traces
        .get(post)
        .ok_or_else(|| Error::Data(format!("post {post} outside the {} traced posts", traces.len())))?;
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|x| x / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostRef {
    pub index: usize,
    pub post_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelevantPost {
    #[serde(flatten)]
    pub post: PostRef,
    pub votes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Heatmap {
    pub post_id: String,
    pub tokens: Vec<TokenWeight>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Explanation {
    pub claim_id: String,
    pub predicted_label: String,
    pub gold_label: String,
    pub probabilities: Vec<f64>,
    pub important_post: PostRef,
    pub top3: Vec<RelevantPost>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub heatmaps: Vec<Heatmap>,
}

impl Explanation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("explanation serialises")
    }

    /// `post_id,position,token,weight` rows for every heatmap.
    pub fn heatmap_csv(&self) -> String {
        let mut out = String::from("post_id,position,token,weight\n");
        for h in &self.heatmaps {
            for (i, t) in h.tokens.iter().enumerate() {
                writeln!(out, "{},{},{},{}", csv_field(&h.post_id), i, csv_field(&t.token), t.weight).unwrap();
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Surface tokens aligned with the ids the model sees for a post.
fn display_tokens(text: &str, limit: usize) -> Vec<String> {
    let mut toks = tokenize(text);
    if toks.is_empty() {
        toks.push(UNK_TOKEN.to_string());
    }
    toks.truncate(limit);
    toks
}

/// Runs the model on `thread` and extracts the important post, its top
/// relevant posts and, for token-level models, heatmaps of those posts.
pub fn explain<F: Float>(
    model: &Model,
    params: &ParamSet<F>,
    thread: &Thread,
    vocab: &Vocabulary,
) -> Result<Explanation> {
    let out = model.predict(params, thread, vocab)?;
    let labels = thread.dataset.labels();
    let post_ref = |i: usize| PostRef {
        index: i,
        post_id: thread.posts[i].id.clone(),
        text: thread.posts[i].text.clone(),
    };
    let impt = important_post(&out.trace);
    let top3: Vec<RelevantPost> = relevant_posts(&out.trace, impt)
        .into_iter()
        .take(TOP_RELEVANT)
        .map(|(i, votes)| RelevantPost { post: post_ref(i), votes })
        .collect();
    let mut heatmaps = Vec::new();
    if let Some(traces) = out.token_traces.as_deref() {
        for i in std::iter::once(impt).chain(top3.iter().map(|r| r.post.index)) {
            let weights = token_heatmap(Some(traces), i)?;
            let tokens = display_tokens(&thread.posts[i].text, weights.len());
            let tokens = if thread.posts[i].token_ids.is_empty() || tokens.len() == weights.len() {
                tokens
            } else {
                thread.posts[i].token_ids.iter().take(weights.len()).map(|&id| vocab.token(id).to_string()).collect()
            };
            heatmaps.push(Heatmap {
                post_id: thread.posts[i].id.clone(),
                tokens: tokens.into_iter().zip(weights).map(|(token, weight)| TokenWeight { token, weight }).collect(),
            });
        }
    }
    Ok(Explanation {
        claim_id: thread.claim_id.clone(),
        predicted_label: labels.get(out.predicted()).map_or("?", |l| l.name()).to_string(),
        gold_label: thread.label.name().to_string(),
        probabilities: out.p,
        important_post: post_ref(impt),
        top3,
        heatmaps,
    })
}

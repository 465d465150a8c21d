//! Conversation threads: parsing, chronological flattening, relation labels,
//! time bins, tokenisation and dataset preprocessing.

mod preprocess;
mod relation;
mod stats;
mod tokenize;
mod vocab;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use preprocess::{amend_unverified, is_retweet, remove_retweets, strip_retweet_prefix, time_bin, Split};
pub use relation::{relation_label, Relation, RelationMatrix};
pub use stats::{dataset_stats, stats_csv, DatasetStats};
pub use tokenize::{tokenize, MENTION, URL};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use crate::error::{Error, Result};

/// Number of latency bins.
pub const TIME_BINS: usize = 100;
/// Width of one latency bin in minutes.
pub const BIN_MINUTES: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Twitter15,
    Twitter16,
    Pheme,
}

impl Dataset {
    /// Class labels in index order.
    pub fn labels(self) -> &'static [Veracity] {
        match self {
            Dataset::Twitter15 | Dataset::Twitter16 => &[
                Veracity::NonRumor,
                Veracity::False,
                Veracity::True,
                Veracity::Unverified,
            ],
            Dataset::Pheme => &[Veracity::False, Veracity::True, Veracity::Unverified],
        }
    }

    pub fn num_classes(self) -> usize {
        self.labels().len()
    }

    pub fn class_index(self, label: Veracity) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    pub fn is_twitter(self) -> bool {
        matches!(self, Dataset::Twitter15 | Dataset::Twitter16)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Twitter15 => "twitter15",
            Dataset::Twitter16 => "twitter16",
            Dataset::Pheme => "pheme",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "twitter15" => Ok(Dataset::Twitter15),
            "twitter16" => Ok(Dataset::Twitter16),
            "pheme" => Ok(Dataset::Pheme),
            other => Err(Error::Config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Veracity {
    #[serde(rename = "non-rumor", alias = "non-rumour", alias = "nonrumor")]
    NonRumor,
    #[serde(rename = "false", alias = "false-rumor", alias = "false-rumour")]
    False,
    #[serde(rename = "true", alias = "true-rumor", alias = "true-rumour")]
    True,
    #[serde(rename = "unverified")]
    Unverified,
}

impl Veracity {
    pub fn name(self) -> &'static str {
        match self {
            Veracity::NonRumor => "non-rumor",
            Veracity::False => "false",
            Veracity::True => "true",
            Veracity::Unverified => "unverified",
        }
    }
}

impl fmt::Display for Veracity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Post {
    pub id: String,
    pub parent_id: Option<String>,
    pub text: String,
    /// Minutes since the source post.
    pub latency_minutes: f64,
    pub token_ids: Vec<usize>,
    pub is_source: bool,
    /// Set when dataset metadata marks the post as a retweet.
    pub retweet: bool,
}

/// A claim: its source post and replies in chronological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Thread {
    pub claim_id: String,
    pub label: Veracity,
    pub dataset: Dataset,
    pub event: Option<String>,
    pub posts: Vec<Post>,
    pub relations: RelationMatrix,
    pub time_bins: Vec<u8>,
}

/// On-disk document for one claim. Processed files additionally carry token
/// ids, the relation matrix and time bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreadDoc {
    pub claim_id: String,
    pub label: Veracity,
    pub dataset: Dataset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    pub posts: Vec<PostDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_matrix: Option<RelationMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_bins: Option<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub text: String,
    pub latency_minutes: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub retweet: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub token_ids: Vec<usize>,
}

/// Parses and validates one thread document.
pub fn parse_thread(document: &str) -> Result<Thread> {
    let doc: ThreadDoc = serde_json::from_str(document).map_err(|e| Error::Parse {
        post_id: String::new(),
        reason: e.to_string(),
    })?;
    Thread::from_doc(doc)
}

pub fn read_thread(path: &Path) -> Result<Thread> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_thread(&text)
}

/// Sorts posts chronologically: the source first, then by `(latency, id)`.
pub fn flatten_chronological(mut posts: Vec<Post>) -> Vec<Post> {
    posts.sort_by(|a, b| {
        b.is_source
            .cmp(&a.is_source)
            .then(a.latency_minutes.total_cmp(&b.latency_minutes))
            .then_with(|| a.id.cmp(&b.id))
    });
    posts
}

fn validate_tree(posts: &[Post]) -> Result<()> {
    let parse_err = |id: &str, reason: &str| Error::Parse {
        post_id: id.to_string(),
        reason: reason.to_string(),
    };
    if posts.is_empty() {
        return Err(parse_err("", "thread has no posts"));
    }
    let mut seen = HashSet::new();
    for p in posts {
        if !seen.insert(p.id.as_str()) {
            return Err(parse_err(&p.id, "duplicate post id"));
        }
    }
    let parent: HashMap<&str, Option<&str>> = posts
        .iter()
        .map(|p| (p.id.as_str(), p.parent_id.as_deref()))
        .collect();
    let mut root: Option<&str> = None;
    for p in posts {
        match p.parent_id.as_deref() {
            None => {
                if root.is_some() {
                    return Err(parse_err(&p.id, "multiple roots"));
                }
                root = Some(&p.id);
            }
            Some(pid) if !parent.contains_key(pid) => {
                return Err(parse_err(&p.id, &format!("dangling parent_id {pid:?}")));
            }
            Some(_) => {}
        }
        if !(p.latency_minutes >= 0.0) || !p.latency_minutes.is_finite() {
            return Err(parse_err(&p.id, "latency must be a non-negative number"));
        }
    }
    for p in posts {
        let mut cur = p.id.as_str();
        let mut steps = 0;
        while let Some(Some(up)) = parent.get(cur) {
            cur = up;
            steps += 1;
            if steps > posts.len() {
                return Err(parse_err(&p.id, "cycle in parent links"));
            }
        }
    }
    let Some(root) = root else {
        return Err(parse_err(&posts[0].id, "cycle in parent links"));
    };
    let root_post = posts.iter().find(|p| p.id == root).unwrap();
    if root_post.latency_minutes != 0.0 {
        return Err(parse_err(root, "source post latency must be 0"));
    }
    Ok(())
}

impl Thread {
    /// Validates the tree and derives order, relations and bins.
    pub fn from_posts(
        claim_id: String,
        label: Veracity,
        dataset: Dataset,
        event: Option<String>,
        mut posts: Vec<Post>,
    ) -> Result<Thread> {
        validate_tree(&posts)?;
        for p in &mut posts {
            p.is_source = p.parent_id.is_none();
        }
        let posts = flatten_chronological(posts);
        let relations = RelationMatrix::build(&posts);
        let time_bins = posts
            .iter()
            .map(|p| time_bin(p.latency_minutes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Thread {
            claim_id,
            label,
            dataset,
            event,
            posts,
            relations,
            time_bins,
        })
    }

    pub fn from_doc(doc: ThreadDoc) -> Result<Thread> {
        let posts = doc
            .posts
            .into_iter()
            .map(|p| Post {
                id: p.id,
                parent_id: p.parent_id,
                text: p.text,
                latency_minutes: p.latency_minutes,
                token_ids: p.token_ids,
                is_source: false,
                retweet: p.retweet,
            })
            .collect();
        let thread = Thread::from_posts(doc.claim_id, doc.label, doc.dataset, doc.event, posts)?;
        if let Some(rel) = doc.relation_matrix {
            if rel != thread.relations {
                return Err(Error::Parse {
                    post_id: String::new(),
                    reason: format!("relation matrix of {} disagrees with its tree", thread.claim_id),
                });
            }
        }
        if let Some(bins) = doc.time_bins {
            if bins != thread.time_bins {
                return Err(Error::Parse {
                    post_id: String::new(),
                    reason: format!("time bins of {} disagree with latencies", thread.claim_id),
                });
            }
        }
        Ok(thread)
    }

    /// Document form. `processed` adds relation matrix and bins.
    pub fn to_doc(&self, processed: bool) -> ThreadDoc {
        ThreadDoc {
            claim_id: self.claim_id.clone(),
            label: self.label,
            dataset: self.dataset,
            event: self.event.clone(),
            posts: self
                .posts
                .iter()
                .map(|p| PostDoc {
                    id: p.id.clone(),
                    parent_id: p.parent_id.clone(),
                    text: p.text.clone(),
                    latency_minutes: p.latency_minutes,
                    retweet: p.retweet,
                    token_ids: p.token_ids.clone(),
                })
                .collect(),
            relation_matrix: processed.then(|| self.relations.clone()),
            time_bins: processed.then(|| self.time_bins.clone()),
        }
    }

    pub fn to_json(&self, processed: bool) -> String {
        serde_json::to_string_pretty(&self.to_doc(processed)).expect("thread serialises")
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn class_index(&self) -> Result<usize> {
        self.dataset.class_index(self.label).ok_or_else(|| {
            Error::Data(format!(
                "label {} is not a {} class (claim {})",
                self.label, self.dataset, self.claim_id
            ))
        })
    }

    /// Fills `token_ids` of every post from `vocab`.
    pub fn tokenize_with(&mut self, vocab: &Vocabulary) {
        for p in &mut self.posts {
            p.token_ids = vocab.encode(&p.text);
        }
    }

    /// Children lists by post index.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let index: HashMap<&str, usize> = self
            .posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        let mut children = vec![Vec::new(); self.posts.len()];
        for (i, p) in self.posts.iter().enumerate() {
            if let Some(&pi) = p.parent_id.as_deref().and_then(|pid| index.get(pid)) {
                children[pi].push(i);
            }
        }
        children
    }

    /// Reorders posts so that new position `a` holds old post `order[a]`,
    /// carrying the relation matrix and bins along unchanged.
    pub fn permuted(&self, order: &[usize]) -> Thread {
        Thread {
            posts: order.iter().map(|&i| self.posts[i].clone()).collect(),
            relations: self.relations.permute(order),
            time_bins: order.iter().map(|&i| self.time_bins[i]).collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests;

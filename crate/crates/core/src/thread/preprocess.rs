use std::collections::HashMap;

use super::{Post, Thread, Veracity, BIN_MINUTES, TIME_BINS};
use crate::error::{Error, Result};

/// Latency bin: `floor(latency / 10)`, clamped to the last bin.
pub fn time_bin(latency_minutes: f64) -> Result<u8> {
    if !(latency_minutes >= 0.0) {
        return Err(Error::Data(format!("negative latency {latency_minutes}")));
    }
    let bin = (latency_minutes / BIN_MINUTES).floor();
    Ok(bin.min((TIME_BINS - 1) as f64) as u8)
}

/// Strips a leading `RT @user:` marker.
pub fn strip_retweet_prefix(text: &str) -> &str {
    let t = text.trim_start();
    let Some(rest) = t.strip_prefix("RT @") else {
        return text;
    };
    let user_len = rest
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    match rest[user_len..].strip_prefix(':') {
        Some(after) if user_len > 0 => after.trim_start(),
        _ => text,
    }
}

/// A reply is a retweet if metadata flags it or its text, minus an
/// `RT @user:` prefix, equals the source text.
pub fn is_retweet(post: &Post, source_text: &str) -> bool {
    !post.is_source
        && (post.retweet || strip_retweet_prefix(&post.text).trim() == source_text.trim())
}

/// Drops retweets from Twitter15/16 threads; other datasets pass through.
/// Replies to a removed post are re-attached to its nearest kept ancestor.
pub fn remove_retweets(thread: &Thread) -> Result<Thread> {
    if !thread.dataset.is_twitter() {
        return Ok(thread.clone());
    }
    let source_text = &thread.posts[0].text;
    let removed: HashMap<&str, Option<&str>> = thread
        .posts
        .iter()
        .filter(|p| is_retweet(p, source_text))
        .map(|p| (p.id.as_str(), p.parent_id.as_deref()))
        .collect();
    if removed.is_empty() {
        return Ok(thread.clone());
    }
    let kept = thread
        .posts
        .iter()
        .filter(|p| !removed.contains_key(p.id.as_str()))
        .map(|p| {
            let mut parent = p.parent_id.as_deref();
            while let Some(up) = parent.and_then(|id| removed.get(id)) {
                parent = *up;
            }
            Post {
                parent_id: parent.map(str::to_string),
                ..p.clone()
            }
        })
        .collect();
    Thread::from_posts(
        thread.claim_id.clone(),
        thread.label,
        thread.dataset,
        thread.event.clone(),
        kept,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Threads left with only their source post are relabelled unverified for
/// training and dropped from test data.
pub fn amend_unverified(threads: Vec<Thread>, split: Split) -> Vec<Thread> {
    match split {
        Split::Train => threads
            .into_iter()
            .map(|mut t| {
                if t.len() == 1 {
                    t.label = Veracity::Unverified;
                }
                t
            })
            .collect(),
        Split::Test => threads.into_iter().filter(|t| t.len() > 1).collect(),
    }
}

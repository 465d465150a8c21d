use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Thread, Veracity};

/// Corpus summary: average tree depth, leaves and posts per claim, class
/// counts and totals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub avg_depth: f64,
    pub avg_leaves: f64,
    pub avg_tweets: f64,
    pub class_counts: BTreeMap<Veracity, usize>,
    pub total_trees: usize,
    pub total_tweets: usize,
}

/// Depth counts nodes on the longest root-to-leaf path, so a lone source
/// post has depth 1 and is itself a leaf.
fn depth_and_leaves(thread: &Thread) -> (usize, usize) {
    let children = thread.children();
    let leaves = children.iter().filter(|c| c.is_empty()).count();
    // Replies may be timestamped before their parent, so walk the tree from
    // the root instead of relying on post order.
    let mut stack = vec![(0usize, 1usize)];
    let mut max = 0;
    while let Some((i, d)) = stack.pop() {
        max = max.max(d);
        stack.extend(children[i].iter().map(|&c| (c, d + 1)));
    }
    (max, leaves)
}

pub fn dataset_stats(name: &str, threads: &[Thread]) -> DatasetStats {
    let mut depth_sum = 0usize;
    let mut leaf_sum = 0usize;
    let mut tweets = 0usize;
    let mut class_counts = BTreeMap::new();
    for t in threads {
        let (d, l) = depth_and_leaves(t);
        depth_sum += d;
        leaf_sum += l;
        tweets += t.len();
        *class_counts.entry(t.label).or_insert(0) += 1;
    }
    let n = threads.len().max(1) as f64;
    DatasetStats {
        name: name.to_string(),
        avg_depth: depth_sum as f64 / n,
        avg_leaves: leaf_sum as f64 / n,
        avg_tweets: tweets as f64 / n,
        class_counts,
        total_trees: threads.len(),
        total_tweets: tweets,
    }
}

/// Comma-separated table, one row per dataset.
pub fn stats_csv(rows: &[DatasetStats]) -> String {
    let mut out = String::from(
        "dataset,tree_depth,num_leaves,num_tweets,false,true,unverified,non_rumor,total_trees,total_tweets\n",
    );
    for s in rows {
        let count = |v| s.class_counts.get(&v).copied().unwrap_or(0);
        writeln!(
            out,
            "{},{:.2},{:.1},{:.1},{},{},{},{},{},{}",
            s.name,
            s.avg_depth,
            s.avg_leaves,
            s.avg_tweets,
            count(Veracity::False),
            count(Veracity::True),
            count(Veracity::Unverified),
            count(Veracity::NonRumor),
            s.total_trees,
            s.total_tweets
        )
        .unwrap();
    }
    out
}

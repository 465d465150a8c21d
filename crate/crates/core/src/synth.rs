//! Seeded synthetic threads for tests, demos and smoke runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::thread::{Dataset, Post, Thread, Veracity};

const FILLER: &[&str] = &[
    "the", "news", "is", "this", "what", "really", "people", "say", "photo", "police", "report",
    "breaking", "just", "now", "they", "we", "think", "source", "video", "city", "today", "wait",
    "hear", "about", "more",
];

fn filler_text(rng: &mut impl Rng, min: usize, max: usize) -> String {
    let words = rng.gen_range(min..max);
    (0..words)
        .map(|_| *FILLER.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Random reply tree with `n` posts. Parents are chosen among earlier
/// created posts; latencies are whole minutes drawn independently, so ties
/// and replies that predate their parent both occur.
pub fn random_thread(rng: &mut impl Rng, n: usize, dataset: Dataset) -> Thread {
    assert!(n >= 1);
    let labels = dataset.labels();
    let posts = (0..n)
        .map(|k| Post {
            id: format!("p{:03}", rng.gen_range(0..1000) * 1000 + k),
            parent_id: None,
            text: filler_text(rng, 1, 8),
            latency_minutes: if k == 0 { 0.0 } else { rng.gen_range(0..1500) as f64 },
            token_ids: Vec::new(),
            is_source: k == 0,
            retweet: false,
        })
        .collect::<Vec<_>>();
    let ids: Vec<String> = posts.iter().map(|p| p.id.clone()).collect();
    let posts = posts
        .into_iter()
        .enumerate()
        .map(|(k, mut p)| {
            if k > 0 {
                p.parent_id = Some(ids[rng.gen_range(0..k)].clone());
            }
            p
        })
        .collect();
    Thread::from_posts(
        format!("claim{}", rng.gen::<u32>()),
        *labels.choose(rng).unwrap(),
        dataset,
        None,
        posts,
    )
    .expect("generated tree is valid")
}

/// Marker token for class `k` in [`marker_corpus`].
pub fn marker(k: usize) -> String {
    format!("marker{k}")
}

/// Threads whose class is decided by a marker token that appears in one or
/// more replies. Classes are balanced; everything else is shared filler.
pub fn marker_corpus(rng: &mut impl Rng, threads: usize, dataset: Dataset) -> Vec<Thread> {
    let labels: Vec<Veracity> = dataset.labels().to_vec();
    (0..threads)
        .map(|t| {
            let class = t % labels.len();
            let n = rng.gen_range(2..6);
            let carriers = rng.gen_range(1..n);
            let mut posts = vec![Post {
                id: "0".into(),
                parent_id: None,
                text: filler_text(rng, 5, 6),
                latency_minutes: 0.0,
                token_ids: Vec::new(),
                is_source: true,
                retweet: false,
            }];
            for k in 1..n {
                let mut text = filler_text(rng, 2, 6);
                if k <= carriers {
                    text.push(' ');
                    text.push_str(&marker(class));
                }
                posts.push(Post {
                    id: k.to_string(),
                    parent_id: Some(rng.gen_range(0..k).to_string()),
                    text,
                    latency_minutes: (k * 7) as f64,
                    token_ids: Vec::new(),
                    is_source: false,
                    retweet: false,
                });
            }
            Thread::from_posts(format!("m{t:03}"), labels[class], dataset, None, posts).unwrap()
        })
        .collect()
}

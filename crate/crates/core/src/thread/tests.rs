use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::synth::random_thread;

fn doc(posts: &[(&str, Option<&str>, &str, f64)]) -> String {
    let posts: Vec<PostDoc> = posts
        .iter()
        .map(|&(id, parent, text, lat)| PostDoc {
            id: id.into(),
            parent_id: parent.map(Into::into),
            text: text.into(),
            latency_minutes: lat,
            retweet: false,
            token_ids: vec![],
        })
        .collect();
    serde_json::to_string(&ThreadDoc {
        claim_id: "c1".into(),
        label: Veracity::False,
        dataset: Dataset::Twitter15,
        event: None,
        posts,
        relation_matrix: None,
        time_bins: None,
    })
    .unwrap()
}

fn order(t: &Thread) -> Vec<&str> {
    t.posts.iter().map(|p| p.id.as_str()).collect()
}

#[test]
fn single_post_thread() {
    let t = parse_thread(&doc(&[("s", None, "claim", 0.0)])).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t.relations.get(0, 0), Relation::Itself);
    assert_eq!(t.time_bins, vec![0]);
}

#[test]
fn two_replies_to_root() {
    let t = parse_thread(&doc(&[
        ("s", None, "claim", 0.0),
        ("a", Some("s"), "x", 1.0),
        ("b", Some("s"), "y", 2.0),
    ]))
    .unwrap();
    assert_eq!(t.len(), 3);
    assert!(t.posts[1..].iter().all(|p| p.parent_id.as_deref() == Some("s")));
    assert_eq!(t.relations.get(1, 0), Relation::Parent);
    assert_eq!(t.relations.get(2, 0), Relation::Parent);
}

#[test]
fn malformed_trees_name_the_post() {
    let cyclic = doc(&[
        ("s", None, "claim", 0.0),
        ("a", Some("b"), "x", 1.0),
        ("b", Some("a"), "y", 2.0),
    ]);
    assert!(matches!(parse_thread(&cyclic), Err(Error::Parse { post_id, .. }) if post_id == "a"));

    let dangling = doc(&[("s", None, "claim", 0.0), ("a", Some("zz"), "x", 1.0)]);
    assert!(matches!(parse_thread(&dangling), Err(Error::Parse { post_id, .. }) if post_id == "a"));

    let two_roots = doc(&[("s", None, "claim", 0.0), ("t", None, "x", 1.0)]);
    assert!(matches!(parse_thread(&two_roots), Err(Error::Parse { post_id, .. }) if post_id == "t"));
}

#[test]
fn chronological_order() {
    let t = parse_thread(&doc(&[
        ("s", None, "c", 0.0),
        ("a", Some("s"), "x", 5.0),
        ("b", Some("s"), "x", 3.0),
        ("c", Some("s"), "x", 8.0),
    ]))
    .unwrap();
    assert_eq!(order(&t), vec!["s", "b", "a", "c"]);

    let t = parse_thread(&doc(&[
        ("s", None, "c", 0.0),
        ("z", Some("s"), "x", 4.0),
        ("m", Some("s"), "x", 4.0),
    ]))
    .unwrap();
    assert_eq!(order(&t), vec!["s", "m", "z"]);

    // a → b → c with c timestamped before b
    let t = parse_thread(&doc(&[
        ("a", None, "c", 0.0),
        ("b", Some("a"), "x", 9.0),
        ("c", Some("b"), "x", 2.0),
    ]))
    .unwrap();
    assert_eq!(order(&t), vec!["a", "c", "b"]);
    assert_eq!(t.relations.get(1, 2), Relation::Parent);
    assert_eq!(t.relations.get(2, 1), Relation::Child);
}

#[test]
fn relation_rules() {
    let t = parse_thread(&doc(&[
        ("s", None, "c", 0.0),
        ("a", Some("s"), "x", 1.0),
        ("b", Some("s"), "x", 2.0),
        ("c", Some("s"), "x", 3.0),
    ]))
    .unwrap();
    // star tree: row 0 is child for every reply, column 0 is parent
    for j in 1..4 {
        assert_eq!(t.relations.get(0, j), Relation::Child);
        assert_eq!(t.relations.get(j, 0), Relation::Parent);
    }
    assert_eq!(t.relations.get(1, 3), Relation::Before);
    assert_eq!(t.relations.get(3, 1), Relation::After);
    assert_eq!(relation_label(2, 2, &t.posts), Relation::Itself);
}

/// Pairwise oracle written against the post list directly.
fn oracle(posts: &[Post], i: usize, j: usize) -> Relation {
    let replies = |a: &Post, b: &Post| a.parent_id.as_ref() == Some(&b.id);
    match (i == j, replies(&posts[i], &posts[j]), replies(&posts[j], &posts[i])) {
        (true, _, _) => Relation::Itself,
        (_, true, _) => Relation::Parent,
        (_, _, true) => Relation::Child,
        _ if i < j => Relation::Before,
        _ => Relation::After,
    }
}

#[test]
fn relation_matrix_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=30 {
        let t = random_thread(&mut rng, n, Dataset::Pheme);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(t.relations.get(i, j), oracle(&t.posts, i, j));
            }
        }
        assert!(t.relations.is_consistent());
    }
}

#[test]
fn time_bins() {
    assert_eq!(time_bin(0.0).unwrap(), 0);
    assert_eq!(time_bin(25.0).unwrap(), 2);
    assert_eq!(time_bin(999.9).unwrap(), 99);
    assert_eq!(time_bin(1500.0).unwrap(), 99);
    assert!(matches!(time_bin(-1.0), Err(Error::Data(_))));
    assert!(time_bin(f64::NAN).is_err());
}

fn twitter_thread(posts: &[(&str, Option<&str>, &str, bool)]) -> Thread {
    let posts = posts
        .iter()
        .enumerate()
        .map(|(k, &(id, parent, text, rt))| Post {
            id: id.into(),
            parent_id: parent.map(Into::into),
            text: text.into(),
            latency_minutes: k as f64,
            token_ids: vec![],
            is_source: parent.is_none(),
            retweet: rt,
        })
        .collect();
    Thread::from_posts("c".into(), Veracity::True, Dataset::Twitter16, None, posts).unwrap()
}

#[test]
fn retweet_removal() {
    let all_rt = twitter_thread(&[
        ("s", None, "Big news here", false),
        ("a", Some("s"), "RT @someone: Big news here", false),
        ("b", Some("s"), "whatever", true),
    ]);
    assert_eq!(remove_retweets(&all_rt).unwrap().len(), 1);

    let none = twitter_thread(&[("s", None, "claim", false), ("a", Some("s"), "no way", false)]);
    assert_eq!(remove_retweets(&none).unwrap(), none);

    // s ← a(rt) ← b ; s ← c ; c ← d(rt) ; s ← e(plain copy of source)
    let mixed = twitter_thread(&[
        ("s", None, "Claim text", false),
        ("a", Some("s"), "RT @x_1: Claim text", false),
        ("b", Some("a"), "is this true?", false),
        ("c", Some("s"), "fake", false),
        ("d", Some("c"), "anything", true),
        ("e", Some("s"), "Claim text", false),
        ("f", Some("s"), "RT @x: not the claim", false),
    ]);
    let cleaned = remove_retweets(&mixed).unwrap();
    assert_eq!(order(&cleaned), vec!["s", "b", "c", "f"]);
    assert_eq!(cleaned.posts[1].parent_id.as_deref(), Some("s"));
    assert_eq!(cleaned.relations.len(), 4);
    assert_eq!(cleaned.time_bins.len(), 4);

    let mut pheme = mixed.clone();
    pheme.dataset = Dataset::Pheme;
    assert_eq!(remove_retweets(&pheme).unwrap().len(), mixed.len());
}

#[test]
fn retweet_prefix() {
    assert_eq!(strip_retweet_prefix("RT @abc_1: hello"), "hello");
    assert_eq!(strip_retweet_prefix("RT @: hello"), "RT @: hello");
    assert_eq!(strip_retweet_prefix("hello"), "hello");
}

#[test]
fn unverified_amendment() {
    let lone = twitter_thread(&[("s", None, "x", false)]);
    let mut lone_false = lone.clone();
    lone_false.label = Veracity::False;
    let busy = twitter_thread(&[("s", None, "x", false), ("a", Some("s"), "y", false)]);

    let train = amend_unverified(vec![lone_false.clone(), busy.clone()], Split::Train);
    assert_eq!(train[0].label, Veracity::Unverified);
    assert_eq!(train[1], busy);

    let test = amend_unverified(vec![lone_false, busy.clone()], Split::Test);
    assert_eq!(test, vec![busy]);
}

#[test]
fn stats_on_small_corpus() {
    // depth 3 chain plus a star
    let chain = twitter_thread(&[
        ("s", None, "x", false),
        ("a", Some("s"), "y", false),
        ("b", Some("a"), "z", false),
    ]);
    let star = twitter_thread(&[
        ("s", None, "x", false),
        ("a", Some("s"), "y", false),
        ("b", Some("s"), "z", false),
        ("c", Some("s"), "w", false),
    ]);
    let s = dataset_stats("toy", &[chain, star]);
    assert_eq!(s.total_trees, 2);
    assert_eq!(s.total_tweets, 7);
    assert_eq!(s.avg_depth, 2.5);
    assert_eq!(s.avg_leaves, 2.0);
    assert_eq!(s.avg_tweets, 3.5);
    assert_eq!(s.class_counts[&Veracity::True], 2);
    let csv = stats_csv(&[s]);
    assert!(csv.lines().nth(1).unwrap().starts_with("toy,2.50,2.0,3.5,0,2,0,0,2,7"));
}

#[test]
fn permutation_relabels_consistently() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = random_thread(&mut rng, 6, Dataset::Twitter15);
    let order = [3, 0, 5, 1, 4, 2];
    let p = t.permuted(&order);
    for a in 0..6 {
        for b in 0..6 {
            assert_eq!(p.relations.get(a, b), t.relations.get(order[a], order[b]));
        }
    }
}

proptest! {
    #[test]
    fn relation_duality(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_thread(&mut rng, n, Dataset::Pheme);
        prop_assert!(t.relations.is_consistent());
        // Rebuilding from the flattened order is a fixed point.
        let again = Thread::from_posts(t.claim_id.clone(), t.label, t.dataset, None, t.posts.clone()).unwrap();
        prop_assert_eq!(&again, &t);
    }

    #[test]
    fn doc_roundtrip(seed in any::<u64>(), n in 1usize..20, processed in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_thread(&mut rng, n, Dataset::Twitter16);
        let back = parse_thread(&t.to_json(processed)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn time_bin_range_and_monotone(a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
        let (ba, bb) = (time_bin(a).unwrap(), time_bin(b).unwrap());
        prop_assert!((ba as usize) < TIME_BINS);
        if a <= b { prop_assert!(ba <= bb); }
    }
}

//! Property tests for the cross-cutting invariants.

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;

use muse_core::multitask::split_train_dev;
use muse_core::retrieval::{mean_average_precision, EmbeddingIndex, Metric, ScoredResult};
use muse_core::subword::{decode, encode_text, train_vocab};
use muse_core::taskgen::transitive_closure;

fn word_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just('a'), Just('b'), Just('c'), Just('d'), Just('e')], 1..6)
        .prop_map(|chars| chars.into_iter().collect())
}

fn corpus_strategy() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(
        proptest::collection::vec(word_strategy(), 1..6).prop_map(|words| words.join(" ")),
        1..12,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_round_trips_canonical_text(corpus in corpus_strategy(), size in 10usize..60) {
        let vocab = train_vocab(&corpus, size.max(10), 1.0).unwrap();
        for text in &corpus {
            let seq = encode_text(&vocab, text, usize::MAX.min(1 << 20)).unwrap();
            prop_assert!(!seq.ids.contains(&vocab.unk_id()));
            prop_assert_eq!(&decode(&vocab, &seq.ids).unwrap(), text);
        }
    }

    #[test]
    fn truncation_is_prefix_monotone(corpus in corpus_strategy(), m1 in 1usize..8, extra in 0usize..8) {
        let vocab = train_vocab(&corpus, 40, 1.0).unwrap();
        let m2 = m1 + extra;
        for text in &corpus {
            let short = encode_text(&vocab, text, m1).unwrap();
            let long = encode_text(&vocab, text, m2).unwrap();
            prop_assert!(short.ids.len() <= long.ids.len());
            prop_assert_eq!(&short.ids[..], &long.ids[..short.ids.len()]);
            prop_assert_eq!(short.length, long.length);
        }
    }

    #[test]
    fn split_preserves_the_example_multiset(n in 1usize..60, frac in 0.0f64..1.0, seed in 0u64..1000) {
        let examples: Vec<usize> = (0..n).collect();
        let (train, dev) = split_train_dev(&examples, frac, seed).unwrap();
        prop_assert_eq!(train.len() + dev.len(), n);
        let mut union: Vec<usize> = train.iter().chain(dev.iter()).copied().collect();
        union.sort_unstable();
        prop_assert_eq!(union, examples);
    }

    #[test]
    fn closure_is_idempotent_on_random_graphs(edges in proptest::collection::vec((0u8..40, 0u8..40), 0..80)) {
        let pairs: Vec<(String, String)> = edges
            .iter()
            .map(|(a, b)| (format!("n{a}"), format!("n{b}")))
            .collect();
        let clusters = transitive_closure(&pairs);
        let mut induced = Vec::new();
        for c in &clusters {
            let members: Vec<&String> = c.iter().collect();
            induced.push((members[0].clone(), members[0].clone()));
            for w in members.windows(2) {
                induced.push((w[0].clone(), w[1].clone()));
            }
        }
        prop_assert_eq!(transitive_closure(&induced), clusters);
    }

    #[test]
    fn map_is_permutation_invariant_and_cutoff_monotone(
        seed in 0u64..500,
        n_queries in 2usize..8,
        n_cands in 3usize..20,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut lists = Vec::new();
        let mut rels = Vec::new();
        for _ in 0..n_queries {
            let mut ids: Vec<usize> = (0..n_cands).collect();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.gen_range(0..=i));
            }
            lists.push(
                ids.iter()
                    .enumerate()
                    .map(|(r, &i)| ScoredResult { id: format!("c{i}"), score: -(r as f64), rank: r + 1 })
                    .collect::<Vec<_>>(),
            );
            let k = rng.gen_range(1..=n_cands);
            rels.push((0..k).map(|i| format!("c{i}")).collect::<HashSet<String>>());
        }
        // permutation invariance over query order
        let base = mean_average_precision(&lists, &rels, 10).unwrap();
        let mut perm: Vec<usize> = (0..n_queries).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let plists: Vec<_> = perm.iter().map(|&i| lists[i].clone()).collect();
        let prels: Vec<_> = perm.iter().map(|&i| rels[i].clone()).collect();
        let permuted = mean_average_precision(&plists, &prels, 10).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);
        // Monotone in cutoff once the cutoff covers every relevant set.
        // Below that point the min(|relevant|, cutoff) normalizer grows with
        // the cutoff and the value may legitimately dip.
        let start = rels.iter().map(|r| r.len()).max().unwrap();
        let mut prev = 0.0;
        for cutoff in start..=n_cands + 3 {
            let v = mean_average_precision(&lists, &rels, cutoff).unwrap();
            prop_assert!(v + 1e-12 >= prev, "cutoff {}: {} < {}", cutoff, v, prev);
            prev = v;
        }
    }

    #[test]
    fn top_k_scores_are_non_increasing_and_consistent(seed in 0u64..500) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..30);
        let d = rng.gen_range(2..6);
        let entries: Vec<(String, Vec<f64>)> = (0..n)
            .map(|i| {
                (
                    format!("c{i:02}"),
                    (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect(),
                )
            })
            .collect();
        let by_id: BTreeMap<String, Vec<f64>> = entries.iter().cloned().collect();
        let index = EmbeddingIndex::build(entries).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0) + 0.01).collect();
        let hits = index.top_k(&q, n, Metric::Dot).unwrap();
        for w in hits.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for (i, h) in hits.iter().enumerate() {
            prop_assert_eq!(h.rank, i + 1);
            let direct: f64 = by_id[&h.id].iter().zip(&q).map(|(a, b)| a * b).sum();
            prop_assert!((h.score - direct).abs() < 1e-12);
        }
    }
}

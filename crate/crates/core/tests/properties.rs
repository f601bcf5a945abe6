mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracles::{brute_force_auc, pool_oracle, random_records};
use relex::bag_encoder::{attend_and_pool, AttentionConfig, Pooling, WeightScheme};
use relex::dataset::{
    build_bags, merge_bag_shards, position_features, split_stratified, CorpusSentence, KbFact, PairId,
    RelationInventory, Sentence, Span, DISTANCE_ROWS, MAX_DISTANCE,
};
use relex::evaluation::{auc_at_recall, pr_curve, PredictionRecord, RECALL_CUTOFF};
use relex::sentence_encoder::distance_row;
use relex::training::{combined_coefficients, combined_loss};

fn bag_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=5, 1usize..=8).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

fn config_strategy() -> impl Strategy<Value = AttentionConfig> {
    (0usize..3, 0usize..2).prop_map(|(w, p)| AttentionConfig::new(WeightScheme::ALL[w], Pooling::ALL[p]))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #[test]
    fn pooling_matches_oracle((s, u) in bag_strategy(), cfg in config_strategy()) {
        let pooled = attend_and_pool(&s, &u, cfg).unwrap();
        let expected = pool_oracle(&s, &u, cfg);
        prop_assert!(close(&pooled.g, &expected, 1e-12), "{cfg}: {:?} vs {:?}", pooled.g, expected);
    }

    #[test]
    fn softmax_weights_sum_to_one((s, u) in bag_strategy(), pooling in 0usize..2) {
        let cfg = AttentionConfig::new(WeightScheme::Softmax, Pooling::ALL[pooling]);
        let pooled = attend_and_pool(&s, &u, cfg).unwrap();
        prop_assert!((pooled.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(pooled.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn pooling_is_permutation_invariant(
        (s, u) in bag_strategy(),
        cfg in config_strategy(),
        rot in 0usize..5,
        reverse in any::<bool>(),
    ) {
        let n = s.len();
        let mut order: Vec<usize> = (0..n).map(|j| (j + rot) % n).collect();
        if reverse {
            order.reverse();
        }
        let s2: Vec<Vec<f64>> = order.iter().map(|&j| s[j].clone()).collect();
        let u2: Vec<f64> = order.iter().map(|&j| u[j]).collect();
        let a = attend_and_pool(&s, &u, cfg).unwrap();
        let b = attend_and_pool(&s2, &u2, cfg).unwrap();
        prop_assert!(close(&a.g, &b.g, 1e-12));
        let permuted: Vec<f64> = order.iter().map(|&j| a.weights[j]).collect();
        prop_assert!(close(&permuted, &b.weights, 1e-12));
    }

    #[test]
    fn auc_matches_threshold_enumeration(seed in any::<u64>(), n in 1usize..200, rate in 0.05f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = random_records(&mut rng, n, rate);
        let auc = auc_at_recall(&pr_curve(&records).unwrap(), RECALL_CUTOFF);
        let oracle = brute_force_auc(&records, RECALL_CUTOFF);
        prop_assert!((auc - oracle).abs() < 1e-9, "{auc} vs {oracle}");
        prop_assert!((0.0..=RECALL_CUTOFF).contains(&auc));
    }

    #[test]
    fn auc_is_invariant_under_monotone_rescaling(seed in any::<u64>(), n in 1usize..200, scale in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = random_records(&mut rng, n, 0.3);
        let rescaled: Vec<PredictionRecord> = records
            .iter()
            .map(|r| PredictionRecord { confidence: (scale * r.confidence).exp(), ..r.clone() })
            .collect();
        let a = auc_at_recall(&pr_curve(&records).unwrap(), RECALL_CUTOFF);
        let b = auc_at_recall(&pr_curve(&rescaled).unwrap(), RECALL_CUTOFF);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn perfect_ranking_scores_the_cutoff(positives in 1usize..50, negatives in 0usize..50) {
        let records: Vec<PredictionRecord> = (0..positives + negatives)
            .map(|i| PredictionRecord {
                pair: PairId::new(format!("a{i}"), "b"),
                relation: 0,
                confidence: if i < positives { 0.9 } else { 0.1 },
                gold: i < positives,
            })
            .collect();
        let auc = auc_at_recall(&pr_curve(&records).unwrap(), RECALL_CUTOFF);
        prop_assert!((auc - RECALL_CUTOFF).abs() < 1e-12, "{auc}");
    }

    #[test]
    fn combined_coefficients_are_a_convex_pair(lambda in 0.0f64..1e6, dist in 0.0f64..100.0, direct in 0.0f64..100.0) {
        let (a, b) = combined_coefficients(lambda);
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!(a >= 0.0 && b >= 0.0);
        let l = combined_loss(dist, direct, lambda);
        prop_assert!(l >= dist.min(direct) - 1e-9 && l <= dist.max(direct) + 1e-9);
    }

    #[test]
    fn distances_clip_to_the_outer_rows(d in -10_000i32..10_000) {
        let row = distance_row(d);
        prop_assert!(row < DISTANCE_ROWS);
        prop_assert_eq!(row, distance_row(d.clamp(-MAX_DISTANCE, MAX_DISTANCE)));
        if d.abs() <= MAX_DISTANCE {
            prop_assert_eq!(row as i32, d + MAX_DISTANCE);
        }
    }

    #[test]
    fn position_features_are_clipped_signed_distances(len in 1usize..150, a in 0usize..150, b in 0usize..150) {
        let (a, b) = (a % len, b % len);
        let (d1, d2) = position_features(len, &[Span::new(a, a + 1)], &[Span::new(b, b + 1)]);
        for i in 0..len {
            prop_assert_eq!(d1[i], (i as i32 - a as i32).clamp(-MAX_DISTANCE, MAX_DISTANCE));
            prop_assert_eq!(d2[i], (i as i32 - b as i32).clamp(-MAX_DISTANCE, MAX_DISTANCE));
        }
    }

    #[test]
    fn stratified_split_is_deterministic_and_proportional(
        positives in 1usize..200,
        negatives in 1usize..400,
        seed in any::<u64>(),
    ) {
        let items: Vec<(usize, bool)> = (0..positives + negatives).map(|i| (i, i % 3 == 0 && i / 3 < positives))
            .collect();
        let pos = items.iter().filter(|x| x.1).count();
        let neg = items.len() - pos;
        let (train, val) = split_stratified(items.clone(), |x| x.1, 0.9, seed).unwrap();
        let (train2, val2) = split_stratified(items.clone(), |x| x.1, 0.9, seed).unwrap();
        prop_assert_eq!(&train, &train2);
        prop_assert_eq!(&val, &val2);
        prop_assert!(!train.is_empty() && !val.is_empty());

        let mut all: Vec<usize> = train.iter().chain(&val).map(|x| x.0).collect();
        all.sort();
        prop_assert_eq!(all, (0..items.len()).collect::<Vec<_>>());

        // each class keeps round(0.9 n) in train, up to the one item moved to keep both sides non-empty
        let train_pos = train.iter().filter(|x| x.1).count() as i64;
        let train_neg = train.len() as i64 - train_pos;
        let want_pos = (pos as f64 * 0.9).round() as i64;
        let want_neg = (neg as f64 * 0.9).round() as i64;
        prop_assert!((train_pos - want_pos).abs() + (train_neg - want_neg).abs() <= 1);
    }

    #[test]
    fn sharded_bag_building_matches_a_single_pass(
        rows in prop::collection::vec((0usize..6, 0usize..6, 0usize..3), 1..40),
        cuts in prop::collection::vec(0usize..40, 0..4),
    ) {
        let inventory = RelationInventory::new(["r0", "r1"]).unwrap();
        let kb = vec![KbFact::new("e0", "r0", "f1"), KbFact::new("e2", "r1", "f3"), KbFact::new("e2", "r0", "f3")];
        let corpus: Vec<CorpusSentence> = rows
            .iter()
            .map(|&(a, b, v)| CorpusSentence {
                pair: PairId::new(format!("e{a}"), format!("f{b}")),
                sentence: Sentence::new(
                    vec![format!("e{a}"), format!("w{v}"), format!("f{b}")],
                    vec![Span::new(0, 1)],
                    vec![Span::new(2, 3)],
                )
                .unwrap(),
            })
            .collect();
        let whole = build_bags(&kb, &corpus, &inventory).unwrap();
        let mut bounds: Vec<usize> = cuts.into_iter().map(|c| c.min(corpus.len())).collect();
        bounds.push(0);
        bounds.push(corpus.len());
        bounds.sort();
        let shards: Vec<_> = bounds
            .windows(2)
            .map(|w| build_bags(&kb, &corpus[w[0]..w[1]], &inventory).unwrap())
            .collect();
        prop_assert_eq!(merge_bag_shards(shards).unwrap(), whole.clone());
        let mut pairs: Vec<&PairId> = whole.iter().map(|b| &b.pair).collect();
        let sorted = { let mut p = pairs.clone(); p.sort(); p };
        prop_assert_eq!(&pairs, &sorted);
        pairs.dedup();
        prop_assert_eq!(pairs.len(), whole.len());
        prop_assert_eq!(whole.iter().map(|b| b.len()).sum::<usize>(), corpus.len());
    }
}

use std::collections::BTreeMap;

use proptest::prelude::*;

use decipher::annotator::{
    knn_query, refine_confidence, AnnotationStore, ConfidenceDict, Neighbor, NeighborSet, WeightMode,
};
use decipher::decomposer::{connected_components, segment_coarse, segment_fine};
use decipher::embedder::{contrastive_loss, contrastive_loss_full, ContrastiveBatch, FeatureVec, Tau};
use decipher::evaluator::{build_holdout, score};
use decipher::glyph_data::{synthetic_dictionary, Bitmap, Glyph, Manifest, ManifestRecord, Period, SynthDictSpec};
use decipher::ids::{parse_ids, serialize_ids, IdsTree, Radical, StructOp};
use decipher::predictor::{SeqToken, TokenSeq};
use decipher::reconstructor::{token_distance, token_similarity};

fn radical() -> impl Strategy<Value = Radical> {
    prop_oneof![
        prop::sample::select(vec!["宀", "女", "子", "木", "口", "日", "月", "⼀", "亻"]),
        prop::sample::select(vec!["CDP-8B7A", "ab", "⺮x"]),
    ]
    .prop_map(|s| Radical::new(s).unwrap())
}

fn tree() -> impl Strategy<Value = IdsTree> {
    radical().prop_map(IdsTree::Leaf).prop_recursive(3, 40, 3, |inner| {
        (
            prop::sample::select(StructOp::ALL.to_vec()),
            prop::collection::vec(inner, 3),
        )
            .prop_map(|(op, mut kids)| {
                kids.truncate(op.arity());
                IdsTree::node(op, kids).unwrap()
            })
    })
}

fn bitmap(side: usize) -> impl Strategy<Value = Bitmap> {
    prop::collection::vec(prop::bool::weighted(0.35), side * side)
        .prop_map(move |d| Bitmap::from_vec(side, side, d))
        .prop_filter("needs ink", |b| !b.is_empty())
}

fn glyph(b: Bitmap) -> Glyph {
    Glyph {
        id: "g".into(),
        period: Period::Obi,
        category: None,
        bitmap: b,
    }
}

fn unit(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

fn batch() -> impl Strategy<Value = ContrastiveBatch> {
    (2usize..6, 0usize..5, prop::sample::select(vec![0.07, 0.5, 1.0]))
        .prop_flat_map(|(dim, negs, tau)| (unit(dim), unit(dim), prop::collection::vec(unit(dim), negs), Just(tau)))
        .prop_map(|(q, k_pos, k_neg, tau)| ContrastiveBatch {
            q,
            k_pos,
            k_neg,
            tau: Tau::new(tau).unwrap(),
        })
}

fn labels() -> Vec<Radical> {
    ["a", "b", "c", "d", "e"]
        .iter()
        .map(|s| Radical::new(*s).unwrap())
        .collect()
}

fn neighbors() -> impl Strategy<Value = NeighborSet> {
    prop::collection::vec(
        (0.0f64..3.0, prop::collection::btree_map(0usize..5, 0.01f64..1.0, 1..4)),
        1..8,
    )
    .prop_map(|raw| {
        let l = labels();
        NeighborSet::new(
            raw.into_iter()
                .enumerate()
                .map(|(i, (d, m))| {
                    let total: f64 = m.values().sum();
                    Neighbor {
                        id: format!("n{i}"),
                        distance: d,
                        dict: ConfidenceDict::from_pairs(m.into_iter().map(|(k, v)| (l[k].clone(), v / total))),
                    }
                })
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ids_round_trip(t in tree()) {
        let text = serialize_ids(&t);
        let back = parse_ids(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(serialize_ids(&back), text);
    }

    #[test]
    fn segmentation_partitions(b in bitmap(24), d in 0.0f64..6.0, area in 1usize..80) {
        let g = glyph(b.clone());
        prop_assert!(segment_coarse(&g, d).unwrap().is_partition_of(&b));
        prop_assert!(segment_fine(&g, area).unwrap().is_partition_of(&b));
    }

    #[test]
    fn coarse_count_shrinks_with_merge_dist(b in bitmap(20), d1 in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let g = glyph(b.clone());
        let near = segment_coarse(&g, d1).unwrap().len();
        let far = segment_coarse(&g, d1 + extra).unwrap().len();
        prop_assert!(far <= near);
        prop_assert!(near <= connected_components(&b).len());
    }

    #[test]
    fn fine_never_coarser_than_components(b in bitmap(20), area in 1usize..60) {
        let g = glyph(b.clone());
        prop_assert!(segment_fine(&g, area).unwrap().len() >= connected_components(&b).len());
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences(bt in batch()) {
        let g = contrastive_loss_full(&bt);
        let h = 1e-6;
        for i in 0..bt.q.len() {
            let mut plus = bt.clone();
            let mut minus = bt.clone();
            plus.q[i] += h;
            minus.q[i] -= h;
            let num = (contrastive_loss(&plus).0 - contrastive_loss(&minus).0) / (2.0 * h);
            prop_assert!((num - g.d_q[i]).abs() <= 1e-4 * num.abs().max(1.0), "dq[{}] {} vs {}", i, num, g.d_q[i]);
            let mut plus = bt.clone();
            let mut minus = bt.clone();
            plus.k_pos[i] += h;
            minus.k_pos[i] -= h;
            let num = (contrastive_loss(&plus).0 - contrastive_loss(&minus).0) / (2.0 * h);
            prop_assert!((num - g.d_pos[i]).abs() <= 1e-4 * num.abs().max(1.0));
        }
        prop_assert!(g.loss >= 0.0);
    }

    #[test]
    fn contrastive_ignores_negative_order(bt in batch(), seed in any::<u64>()) {
        let mut shuffled = bt.clone();
        let n = shuffled.k_neg.len();
        if n > 1 {
            shuffled.k_neg.rotate_left((seed as usize) % n);
            shuffled.k_neg.reverse();
        }
        prop_assert!((contrastive_loss(&bt).0 - contrastive_loss(&shuffled).0).abs() < 1e-12);
    }

    #[test]
    fn refine_sums_to_one(ns in neighbors(), mode in prop::sample::select(vec![WeightMode::Inverse, WeightMode::Literal, WeightMode::Neg])) {
        let out = refine_confidence(&ns, mode).unwrap();
        prop_assert!((out.total() - 1.0).abs() < 1e-9);
        prop_assert!(out.iter().all(|(_, v)| v >= 0.0));
    }

    #[test]
    fn refine_commutes_with_renaming(ns in neighbors(), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let l = labels();
        let targets: Vec<Radical> = ["v", "w", "x", "y", "z"].iter().map(|s| Radical::new(*s).unwrap()).collect();
        let rename: BTreeMap<&Radical, &Radical> = l.iter().zip(perm.iter().map(|&p| &targets[p])).collect();
        let renamed = NeighborSet::new(
            ns.as_slice()
                .iter()
                .map(|n| Neighbor {
                    id: n.id.clone(),
                    distance: n.distance,
                    dict: ConfidenceDict::from_pairs(n.dict.iter().map(|(k, v)| (rename[k].clone(), v))),
                })
                .collect(),
        );
        let a = refine_confidence(&ns, WeightMode::Inverse).unwrap();
        let b = refine_confidence(&renamed, WeightMode::Inverse).unwrap();
        for (k, v) in a.iter() {
            prop_assert!((b.get(rename[k]) - v).abs() < 1e-12);
        }
        prop_assert_eq!(a.len(), b.len());
    }

    #[test]
    fn knn_matches_brute_force(
        items in prop::collection::vec((unit(4), 0usize..5), 1..40),
        query in unit(4),
        k in 1usize..10,
    ) {
        let l = labels();
        let mut store = AnnotationStore::new();
        for (i, (f, lab)) in items.iter().enumerate() {
            store.insert_seeded(format!("c{i:03}"), FeatureVec::normalized(f.clone()).unwrap(), ConfidenceDict::one_hot(l[*lab].clone()));
        }
        let q = FeatureVec::normalized(query).unwrap();
        let got = knn_query(&q, &store, k);
        if k > items.len() {
            prop_assert!(got.is_err());
        } else {
            let mut all: Vec<(f64, String)> = store.iter().map(|(id, it)| (q.distance(&it.feature), id.clone())).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let want: Vec<String> = all.into_iter().take(k).map(|(_, id)| id).collect();
            prop_assert_eq!(got.unwrap().ids(), want);
        }
    }

    #[test]
    fn fuzzy_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        prop_assert_eq!(token_distance(&a, &b), token_distance(&b, &a));
        prop_assert_eq!(token_similarity(&a, &b), token_similarity(&b, &a));
        prop_assert_eq!(token_distance(&a, &a), 0);
        prop_assert!(token_distance(&a, &c) <= token_distance(&a, &b) + token_distance(&b, &c));
        let s = token_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
    }
}

fn score_fixture() -> (decipher::ids::CharDict, Manifest) {
    let dict = synthetic_dictionary(
        &SynthDictSpec {
            n_radicals: 6,
            n_compounds: 14,
            ..Default::default()
        },
        3,
    );
    let mut records = Vec::new();
    for (pi, period) in [Period::Obi, Period::Bronze].into_iter().enumerate() {
        for e in dict.entries() {
            for k in 0..(pi + 1) {
                let id = format!("{period}-{:04X}-{k}", e.ch as u32);
                records.push(ManifestRecord {
                    image_path: format!("{id}.pgm").into(),
                    id,
                    period,
                    category: Some(e.ch),
                });
            }
        }
    }
    (dict, Manifest::from_records(records).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_ignores_prediction_order(choices in prop::collection::vec(0usize..4, 64), seed in any::<u64>(), rot in 0usize..64) {
        let (dict, manifest) = score_fixture();
        let plan = build_holdout(&manifest, 8, seed).unwrap();
        let entries: Vec<_> = dict.entries().collect();
        let preds: Vec<TokenSeq> = plan
            .test_records(&manifest)
            .iter()
            .zip(&choices)
            .filter(|(_, &c)| c != 3)
            .map(|(r, &c)| match c {
                0 => TokenSeq::from_tree(r.id.clone(), &dict.get(r.category.unwrap()).unwrap().ids),
                1 => TokenSeq::from_tree(r.id.clone(), &entries[r.id.len() % entries.len()].ids),
                _ => TokenSeq { glyph_id: r.id.clone(), tokens: vec![SeqToken::Eos] },
            })
            .collect();
        let mut shuffled = preds.clone();
        if !shuffled.is_empty() {
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
        }
        let a = score(&preds, &manifest, &dict, &plan, 0.34, 3).unwrap();
        let b = score(&shuffled, &manifest, &dict, &plan, 0.34, 3).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}

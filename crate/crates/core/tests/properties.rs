//! Property tests over the index, losses, fusion, and recall metrics.

use cmrr_core::eval::{mean_recall, DirectionScores, EvalReport};
use cmrr_core::index::{topk, topk_batch, EmbeddingIndex};
use cmrr_core::pipeline::{fuse_scores, rank_candidates, Candidate, Fusion};
use cmrr_core::rng::Rng;
use cmrr_core::train::{bce_loss, triplet_loss};
use proptest::prelude::*;

fn unit_rows(seed: u64, n: usize, dim: usize) -> Vec<f32> {
    let mut rng = Rng::new(seed);
    let mut rows = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let raw: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
        rows.extend(raw.iter().map(|v| (v / norm) as f32));
    }
    rows
}

proptest! {
    #[test]
    fn topk_is_a_prefix_of_larger_topk(seed in 0u64..500, n in 1usize..40, k1 in 1usize..10, extra in 0usize..10) {
        let dim = 4;
        let index = EmbeddingIndex::from_parts((0..n as u32).collect(), dim, unit_rows(seed, n, dim)).unwrap();
        let mut rng = Rng::new(seed ^ 0x51);
        let query: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let small = topk(&index, &query, k1).unwrap();
        let large = topk(&index, &query, k1 + extra).unwrap();
        prop_assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn insertion_order_never_changes_topk(seed in 0u64..500, n in 2usize..30) {
        let dim = 3;
        let rows = unit_rows(seed, n, dim);
        let ids: Vec<u32> = (0..n as u32).collect();
        let index = EmbeddingIndex::from_parts(ids.clone(), dim, rows.clone()).unwrap();
        // Reverse the storage order; ids stay attached to their rows.
        let mut rev_ids = ids.clone();
        rev_ids.reverse();
        let mut rev_rows = Vec::with_capacity(rows.len());
        for i in (0..n).rev() {
            rev_rows.extend_from_slice(&rows[i * dim..(i + 1) * dim]);
        }
        let reversed = EmbeddingIndex::from_parts(rev_ids, dim, rev_rows).unwrap();
        let mut rng = Rng::new(seed ^ 0xfeed);
        let query: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let a = topk(&index, &query, n).unwrap();
        let b = topk(&reversed, &query, n).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn shard_count_never_changes_results(seed in 0u64..300, n in 1usize..50, shards in 1usize..8, k in 1usize..12) {
        let dim = 4;
        let index = EmbeddingIndex::from_parts((0..n as u32).collect(), dim, unit_rows(seed, n, dim)).unwrap();
        let mut rng = Rng::new(seed ^ 0xbeef);
        let queries: Vec<Vec<f64>> = (0..3).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let sharded = topk_batch(&index, &queries, k, shards).unwrap();
        for (q, result) in queries.iter().zip(&sharded) {
            let sequential = topk(&index, q, k).unwrap();
            prop_assert_eq!(result, &sequential);
        }
    }

    #[test]
    fn power_of_two_scaling_is_absorbed_by_normalization(seed in 0u64..300, n in 2usize..20, exp in -3i32..4) {
        // Scaling raw vectors by powers of two is exact in floating point,
        // so normalized rows and hence rankings are bitwise identical.
        let dim = 4;
        let mut rng = Rng::new(seed);
        let mut raw: Vec<f64> = Vec::new();
        for _ in 0..n * dim {
            raw.push(rng.normal());
        }
        let scale = (2.0f64).powi(exp);
        let normalize = |values: &[f64]| -> Vec<f32> {
            let mut out = Vec::with_capacity(values.len());
            for row in values.chunks(dim) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                out.extend(row.iter().map(|v| (v / norm) as f32));
            }
            out
        };
        let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let ids: Vec<u32> = (0..n as u32).collect();
        let a = EmbeddingIndex::from_parts(ids.clone(), dim, normalize(&raw)).unwrap();
        let b = EmbeddingIndex::from_parts(ids, dim, normalize(&scaled)).unwrap();
        let query: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        prop_assert_eq!(topk(&a, &query, n).unwrap(), topk(&b, &query, n).unwrap());
    }

    #[test]
    fn triplet_loss_is_nonnegative_and_scale_invariant(
        values in proptest::collection::vec(-3.0f64..3.0, 12),
        alpha in 0.0f64..1.0,
        scale in 0.5f64..4.0,
    ) {
        let norm_ok = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() > 1e-6;
        let (a, rest) = values.split_at(3);
        let (b, rest) = rest.split_at(3);
        let (c, d) = rest.split_at(3);
        prop_assume!(norm_ok(a) && norm_ok(b) && norm_ok(c) && norm_ok(d));
        let (loss, _) = triplet_loss(a, b, c, d, alpha).unwrap();
        prop_assert!(loss >= 0.0);
        let scaled: Vec<f64> = b.iter().map(|x| x * scale).collect();
        let (loss2, _) = triplet_loss(a, &scaled, c, d, alpha).unwrap();
        prop_assert!((loss - loss2).abs() < 1e-9);
    }

    #[test]
    fn bce_gradient_is_sigmoid_minus_label(logit in -30.0f64..30.0, y in prop::bool::ANY) {
        let y = if y { 1.0 } else { 0.0 };
        let (loss, grad) = bce_loss(logit, y).unwrap();
        prop_assert!(loss >= 0.0);
        let sig = 1.0 / (1.0 + (-logit).exp());
        prop_assert!((grad - (sig - y)).abs() < 1e-12);
    }

    #[test]
    fn fusion_add_is_bounded_by_inputs(
        be in proptest::collection::vec(-1.0f64..1.0, 1..12),
        lambda in 0.0f64..1.0,
        seed in 0u64..100,
    ) {
        let mut rng = Rng::new(seed);
        let ce: Vec<f64> = be.iter().map(|_| rng.next_f64()).collect();
        let fused = fuse_scores(&Fusion::Add(lambda), &be, &ce).unwrap();
        for ((f, e), c) in fused.iter().zip(&be).zip(&ce) {
            let lo = e.min(*c);
            let hi = e.max(*c);
            prop_assert!(*f >= lo - 1e-12 && *f <= hi + 1e-12);
        }
    }

    #[test]
    fn mean_recall_is_permutation_invariant(values in proptest::collection::vec(0.0f64..1.0, 6), swap in 0usize..6) {
        let build = |v: &[f64]| {
            let mut report = EvalReport::empty();
            report.image_retrieval = Some(DirectionScores { r1: v[0], r5: v[1], r10: v[2], ranks: vec![] });
            report.text_retrieval = Some(DirectionScores { r1: v[3], r5: v[4], r10: v[5], ranks: vec![] });
            report
        };
        let mut permuted = values.clone();
        permuted.swap(swap, (swap + 3) % 6);
        let a = mean_recall(&build(&values)).unwrap();
        let b = mean_recall(&build(&permuted)).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fusion_endpoints_on_random_fixtures() {
    // lambda = 0 reproduces the CE-only ordering, lambda = 1 the BE
    // ordering, over 50 random candidate sets.
    let mut rng = Rng::new(90);
    for trial in 0..50 {
        let n = 2 + rng.below(30);
        let candidates: Vec<Candidate> = (0..n)
            .map(|i| {
                (
                    i as u32,
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(-8.0, 8.0),
                )
            })
            .collect();
        let order = |fusion: &Fusion| -> Vec<u32> {
            rank_candidates(fusion, &candidates)
                .unwrap()
                .iter()
                .map(|e| e.item_id)
                .collect()
        };
        assert_eq!(order(&Fusion::Add(0.0)), order(&Fusion::CeOnly), "trial {trial}");
        let be_order: Vec<u32> = {
            let mut sorted = candidates.clone();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            sorted.iter().map(|c| c.0).collect()
        };
        assert_eq!(order(&Fusion::Add(1.0)), be_order, "trial {trial}");
    }
}

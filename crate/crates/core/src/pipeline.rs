//! The three retrieval strategies and score fusion.
//!
//! `retrieve_be` encodes the query once and scans the pre-encoded index.
//! `retrieve_ce` cross-scores the query against every target. `retrieve_coop`
//! retrieves top-k candidates with the bi-encoder and reranks exactly those
//! with the cross-encoder, so its cross-score work is bounded by k no matter
//! how large the collection grows. Every ranking carries exact counters for
//! encode and cross-score invocations.
//!
//! Cross-encoder orderings sort by logit; the sigmoid is strictly monotone,
//! so the order matches probability while staying robust to saturation.

use alloc::vec::Vec;

use crate::corpus::{Corpus, Item, Modality};
use crate::index::{topk, EmbeddingIndex};
use crate::model::{encode, probability_from_logit, ModelParams};
use crate::{Error, Result};

/// How stage-2 scores combine with stage-1 cosines in cooperative retrieval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fusion {
    /// Rank by the cross-encoder alone (the strongest setting by default).
    CeOnly,
    /// lambda * be + (1 - lambda) * ce, on raw cosine and probability.
    Add(f64),
    /// Same weighted sum after 0-1 normalizing each score list over the
    /// candidate set.
    NormAdd(f64),
}

impl Fusion {
    pub fn validate(&self) -> Result<()> {
        match self {
            Fusion::CeOnly => Ok(()),
            Fusion::Add(lambda) | Fusion::NormAdd(lambda) => {
                if (0.0..=1.0).contains(lambda) {
                    Ok(())
                } else {
                    Err(Error::InvalidSpec("fusion lambda must lie in [0, 1]".into()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopConfig {
    pub k: usize,
    pub fusion: Fusion,
}

impl Default for CoopConfig {
    fn default() -> Self {
        CoopConfig {
            k: 20,
            fusion: Fusion::CeOnly,
        }
    }
}

impl CoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidSpec("coop k must be >= 1".into()));
        }
        self.fusion.validate()
    }
}

/// Exact work counters for one ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub encode_calls: u64,
    pub cross_score_calls: u64,
}

impl Counters {
    pub fn add(&mut self, other: Counters) {
        self.encode_calls += other.encode_calls;
        self.cross_score_calls += other.cross_score_calls;
    }
}

/// One ranked candidate with score provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEntry {
    pub item_id: u32,
    pub be_score: Option<f64>,
    pub ce_score: Option<f64>,
    pub final_score: f64,
}

/// Ordered result list for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: u32,
    pub entries: Vec<RankEntry>,
    pub counters: Counters,
}

#[inline]
fn ranks_before(a: (f64, u32), b: (f64, u32)) -> bool {
    match a.0.total_cmp(&b.0) {
        core::cmp::Ordering::Greater => true,
        core::cmp::Ordering::Less => false,
        core::cmp::Ordering::Equal => a.1 < b.1,
    }
}

fn sort_by_rank(keyed: &mut [(f64, RankEntry)]) {
    keyed.sort_unstable_by(|a, b| {
        if ranks_before((a.0, a.1.item_id), (b.0, b.1.item_id)) {
            core::cmp::Ordering::Less
        } else {
            core::cmp::Ordering::Greater
        }
    });
}

/// Bi-encoder retrieval: one query encode, then an exact index scan.
/// Counters: exactly one encode, zero cross-score calls.
pub fn retrieve_be(
    query: &Item,
    index: &EmbeddingIndex,
    params: &ModelParams,
    top_m: usize,
) -> Result<Ranking> {
    let embedding = encode(params, query)?;
    let hits = topk(index, &embedding, top_m)?;
    Ok(Ranking {
        query_id: query.id,
        entries: hits
            .into_iter()
            .map(|(id, score)| RankEntry {
                item_id: id,
                be_score: Some(score as f64),
                ce_score: None,
                final_score: score as f64,
            })
            .collect(),
        counters: Counters {
            encode_calls: 1,
            cross_score_calls: 0,
        },
    })
}

/// Pairs the query with a target in (image, caption) order.
fn oriented<'a>(query: &'a Item, target: &'a Item) -> Result<(&'a Item, &'a Item)> {
    match (query.modality, target.modality) {
        (Modality::Image, Modality::Caption) => Ok((query, target)),
        (Modality::Caption, Modality::Image) => Ok((target, query)),
        _ => Err(Error::ModalityMismatch),
    }
}

/// Cross-encoder retrieval: one full forward pass per (query, target)
/// combination; nothing is pre-computed. Counters: |targets| cross-score
/// calls.
pub fn retrieve_ce(
    query: &Item,
    targets: &[&Item],
    params: &ModelParams,
    top_m: usize,
) -> Result<Ranking> {
    if targets.is_empty() {
        return Err(Error::InvalidSpec("retrieve_ce requires targets".into()));
    }
    let mut counters = Counters::default();
    let mut keyed = Vec::with_capacity(targets.len());
    for target in targets {
        let (image, caption) = oriented(query, target)?;
        let logit = crate::model::logit(params, image, caption)?;
        counters.cross_score_calls += 1;
        let p = probability_from_logit(logit);
        keyed.push((
            logit,
            RankEntry {
                item_id: target.id,
                be_score: None,
                ce_score: Some(p),
                final_score: p,
            },
        ));
    }
    sort_by_rank(&mut keyed);
    keyed.truncate(top_m);
    Ok(Ranking {
        query_id: query.id,
        entries: keyed.into_iter().map(|(_, e)| e).collect(),
        counters,
    })
}

/// A stage-2 candidate: id, stage-1 cosine, stage-2 logit.
pub type Candidate = (u32, f64, f64);

/// Orders candidates under a fusion mode. CeOnly sorts by logit; the fused
/// modes sort by the fused score. Ties always break toward the smaller id.
pub fn rank_candidates(fusion: &Fusion, candidates: &[Candidate]) -> Result<Vec<RankEntry>> {
    fusion.validate()?;
    let be_scores: Vec<f64> = candidates.iter().map(|c| c.1).collect();
    let probs: Vec<f64> = candidates
        .iter()
        .map(|c| probability_from_logit(c.2))
        .collect();
    let fused = fuse_scores(fusion, &be_scores, &probs)?;
    let mut keyed: Vec<(f64, RankEntry)> = candidates
        .iter()
        .enumerate()
        .map(|(i, &(id, be, logit))| {
            let sort_key = match fusion {
                Fusion::CeOnly => logit,
                _ => fused[i],
            };
            (
                sort_key,
                RankEntry {
                    item_id: id,
                    be_score: Some(be),
                    ce_score: Some(probs[i]),
                    final_score: fused[i],
                },
            )
        })
        .collect();
    sort_by_rank(&mut keyed);
    Ok(keyed.into_iter().map(|(_, e)| e).collect())
}

/// Cooperative retrieval: stage 1 retrieves the top-k candidate set with the
/// bi-encoder, stage 2 cross-scores exactly those candidates and reorders
/// them under the fusion mode. Nothing outside the candidate set is ever
/// returned, and cross-score work is min(k, N) regardless of corpus size.
pub fn retrieve_coop(
    query: &Item,
    index: &EmbeddingIndex,
    corpus: &Corpus,
    params: &ModelParams,
    config: &CoopConfig,
    top_m: usize,
) -> Result<Ranking> {
    config.validate()?;
    let embedding = encode(params, query)?;
    let mut counters = Counters {
        encode_calls: 1,
        cross_score_calls: 0,
    };
    let hits = topk(index, &embedding, config.k)?;
    let mut candidates = Vec::with_capacity(hits.len());
    for (id, be_score) in hits {
        let target = corpus.item(id).ok_or(Error::UnknownItem { id })?;
        let (image, caption) = oriented(query, target)?;
        let logit = crate::model::logit(params, image, caption)?;
        counters.cross_score_calls += 1;
        candidates.push((id, be_score as f64, logit));
    }
    let mut entries = rank_candidates(&config.fusion, &candidates)?;
    entries.truncate(top_m);
    Ok(Ranking {
        query_id: query.id,
        entries,
        counters,
    })
}

fn normalize01(xs: &[f64]) -> Vec<f64> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        min = min.min(x);
        max = max.max(x);
    }
    if max.partial_cmp(&min) != Some(core::cmp::Ordering::Greater) {
        // Degenerate candidate set: a constant list carries no order, so it
        // maps to all zeros and the other list decides.
        return alloc::vec![0.0; xs.len()];
    }
    let range = max - min;
    xs.iter().map(|&x| (x - min) / range).collect()
}

/// Combines aligned bi-encoder and cross-encoder score lists.
///
/// Add: lambda * e + (1 - lambda) * c. NormAdd: both lists are 0-1
/// normalized over the candidate set first. CeOnly returns the CE list.
pub fn fuse_scores(fusion: &Fusion, be_scores: &[f64], ce_probs: &[f64]) -> Result<Vec<f64>> {
    if be_scores.len() != ce_probs.len() {
        return Err(Error::InvalidSpec(
            "fusion requires aligned score lists".into(),
        ));
    }
    fusion.validate()?;
    Ok(match *fusion {
        Fusion::CeOnly => ce_probs.to_vec(),
        Fusion::Add(lambda) => be_scores
            .iter()
            .zip(ce_probs)
            .map(|(&e, &c)| lambda * e + (1.0 - lambda) * c)
            .collect(),
        Fusion::NormAdd(lambda) => {
            let e_norm = normalize01(be_scores);
            let c_norm = normalize01(ce_probs);
            e_norm
                .iter()
                .zip(&c_norm)
                .map(|(&e, &c)| lambda * e + (1.0 - lambda) * c)
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Item;
    use crate::index::EmbeddingIndex;
    use crate::model::{init_params, LayerSkip, ModelConfig};
    use alloc::vec;

    fn identity_model() -> ModelParams {
        let mut params = init_params(&ModelConfig {
            feature_dim: 2,
            embed_dim: 2,
            trunk_layers: 0,
            layer_skip: LayerSkip::Full,
            seed: 0,
        })
        .unwrap();
        params.input_w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        params
    }

    fn item(id: u32, modality: Modality, tokens: &[f32]) -> Item {
        Item::new(id, modality, 2, tokens.to_vec()).unwrap()
    }

    fn three_caption_index() -> EmbeddingIndex {
        EmbeddingIndex::from_parts(
            vec![10, 11, 12],
            2,
            vec![1.0, 0.0, 0.6, 0.8, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn retrieve_be_hand_fixture_and_counters() {
        let params = identity_model();
        let index = three_caption_index();
        let query = item(0, Modality::Image, &[0.8, 0.6]);
        let ranking = retrieve_be(&query, &index, &params, 1).unwrap();
        assert_eq!(ranking.entries.len(), 1);
        assert_eq!(ranking.entries[0].item_id, 11);
        assert_eq!(
            ranking.counters,
            Counters {
                encode_calls: 1,
                cross_score_calls: 0
            }
        );
        assert!(ranking.entries[0].ce_score.is_none());
    }

    #[test]
    fn retrieve_ce_with_zero_head_is_total_tie_in_id_order() {
        let params = identity_model();
        let query = item(0, Modality::Image, &[1.0, 0.0]);
        let targets = [
            item(7, Modality::Caption, &[0.5, 0.5]),
            item(3, Modality::Caption, &[1.0, 0.0]),
            item(5, Modality::Caption, &[0.0, 1.0]),
        ];
        let refs: Vec<&Item> = targets.iter().collect();
        let ranking = retrieve_ce(&query, &refs, &params, 3).unwrap();
        let ids: Vec<u32> = ranking.entries.iter().map(|e| e.item_id).collect();
        assert_eq!(ids, vec![3, 5, 7]);
        assert!(ranking.entries.iter().all(|e| e.final_score == 0.5));
        assert_eq!(ranking.counters.cross_score_calls, 3);
        assert_eq!(ranking.counters.encode_calls, 0);
    }

    #[test]
    fn retrieve_ce_constructed_head_puts_gold_first() {
        let mut params = identity_model();
        params.head.w_caption = vec![0.0, 1.0];
        let query = item(0, Modality::Image, &[1.0, 0.0]);
        let targets = [
            item(10, Modality::Caption, &[1.0, 0.0]),
            item(11, Modality::Caption, &[0.0, 1.0]), // gold by construction
            item(12, Modality::Caption, &[-1.0, 0.0]),
        ];
        let refs: Vec<&Item> = targets.iter().collect();
        let ranking = retrieve_ce(&query, &refs, &params, 3).unwrap();
        assert_eq!(ranking.entries[0].item_id, 11);
    }

    #[test]
    fn coop_reranks_gold_above_stronger_be_score() {
        // BE cosines: a = 0.9, gold = 0.8, b = 0.1. CE gives gold the top
        // logit, so coop's top-1 flips to gold while BE's stays on a.
        let mut params = identity_model();
        params.head.w_caption = vec![0.0, 1.0];
        let sq = |x: f32| libm::sqrtf(1.0 - x * x);
        let index = EmbeddingIndex::from_parts(
            vec![10, 11, 12],
            2,
            vec![0.9, sq(0.9), 0.8, sq(0.8), 0.1, sq(0.1)],
        )
        .unwrap();
        let items = vec![
            item(99, Modality::Image, &[1.0, 0.0]),
            item(10, Modality::Caption, &[1.0, 0.0]),
            item(11, Modality::Caption, &[0.0, 1.0]),
            item(12, Modality::Caption, &[-1.0, 0.0]),
        ];
        let corpus = Corpus::new(2, items, vec![(99, 11)]).unwrap();
        let query = corpus.item(99).unwrap();

        let be = retrieve_be(query, &index, &params, 1).unwrap();
        assert_eq!(be.entries[0].item_id, 10);

        let coop = retrieve_coop(
            query,
            &index,
            &corpus,
            &params,
            &CoopConfig {
                k: 2,
                fusion: Fusion::CeOnly,
            },
            2,
        )
        .unwrap();
        assert_eq!(coop.entries[0].item_id, 11);
        assert_eq!(coop.counters.cross_score_calls, 2);
        // Candidate set preservation: coop never returns b.
        assert!(coop.entries.iter().all(|e| e.item_id != 12));
    }

    #[test]
    fn coop_cross_score_work_is_bounded_by_k() {
        let params = identity_model();
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        let mut items = vec![item(1000, Modality::Image, &[1.0, 0.0])];
        for i in 0..100u32 {
            ids.push(i);
            let angle = (i as f32) * 0.01 + 0.05;
            vectors.extend_from_slice(&[angle.cos(), angle.sin()]);
            items.push(item(i, Modality::Caption, &[angle.cos(), angle.sin()]));
        }
        let index = EmbeddingIndex::from_parts(ids, 2, vectors).unwrap();
        let corpus = Corpus::new(2, items, vec![]).unwrap();
        let query = corpus.item(1000).unwrap();
        let config = CoopConfig {
            k: 20,
            fusion: Fusion::CeOnly,
        };
        let ranking = retrieve_coop(query, &index, &corpus, &params, &config, 20).unwrap();
        assert_eq!(ranking.counters.cross_score_calls, 20);
        assert_eq!(ranking.counters.encode_calls, 1);
    }

    #[test]
    fn fuse_add_arithmetic() {
        let fused = fuse_scores(&Fusion::Add(0.5), &[0.8], &[0.6]).unwrap();
        assert!((fused[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn fuse_normadd_normalizes_each_list() {
        let fused = fuse_scores(&Fusion::NormAdd(1.0), &[0.2, 0.5, 0.8], &[0.5, 0.5, 0.5]).unwrap();
        for (got, want) in fused.iter().zip(&[0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // Degenerate list maps to zeros.
        let fused = fuse_scores(&Fusion::NormAdd(0.0), &[0.2, 0.5, 0.8], &[0.4, 0.4, 0.4]).unwrap();
        assert_eq!(fused, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn add_endpoints_reproduce_ce_and_be_orderings() {
        let candidates: Vec<Candidate> = vec![
            (4, 0.91, -0.3),
            (9, 0.40, 2.1),
            (2, 0.77, 0.4),
            (7, 0.15, 1.2),
        ];
        let ce_order: Vec<u32> = rank_candidates(&Fusion::CeOnly, &candidates)
            .unwrap()
            .iter()
            .map(|e| e.item_id)
            .collect();
        let add0: Vec<u32> = rank_candidates(&Fusion::Add(0.0), &candidates)
            .unwrap()
            .iter()
            .map(|e| e.item_id)
            .collect();
        assert_eq!(ce_order, add0);
        let be_order: Vec<u32> = {
            let mut sorted = candidates.clone();
            sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
            sorted.iter().map(|c| c.0).collect()
        };
        let add1: Vec<u32> = rank_candidates(&Fusion::Add(1.0), &candidates)
            .unwrap()
            .iter()
            .map(|e| e.item_id)
            .collect();
        assert_eq!(be_order, add1);
    }

    #[test]
    fn fusion_lambda_is_validated() {
        assert!(Fusion::Add(1.5).validate().is_err());
        assert!(Fusion::NormAdd(-0.1).validate().is_err());
        assert!(Fusion::Add(0.0).validate().is_ok());
    }
}

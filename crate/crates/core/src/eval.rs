//! Recall@M, mean Recall, distractor augmentation, and the evaluation
//! driver for the three retrieval strategies.
//!
//! A query scores a hit at cutoff M when any of its gold targets appears in
//! its top-M entries (the multi-caption protocol). Mean Recall averages
//! R@1/5/10 over both retrieval directions. Timing uses an injected clock so
//! the driver stays pure; callers that cannot measure time pass `NullClock`.

use alloc::vec::Vec;

use crate::corpus::{Corpus, Item, Modality};
use crate::index::build_index;
use crate::model::ModelParams;
use crate::pipeline::{retrieve_be, retrieve_ce, retrieve_coop, CoopConfig, Counters, Ranking};
use crate::{Error, Result};

/// Retrieval direction: which modality is queried and which is retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Text query retrieves images.
    ImageRetrieval,
    /// Image query retrieves captions.
    TextRetrieval,
}

/// Monotonic nanosecond source injected into [`evaluate`].
pub trait Clock {
    fn now_nanos(&mut self) -> u64;
}

/// Clock that always reads zero; timings come out as zero.
pub struct NullClock;

impl Clock for NullClock {
    fn now_nanos(&mut self) -> u64 {
        0
    }
}

/// One directional evaluation task over item ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub direction: Direction,
    pub queries: Vec<u32>,
    pub targets: Vec<u32>,
    /// Relevant target ids per query, aligned with `queries`.
    pub gold: Vec<Vec<u32>>,
}

impl EvalTask {
    /// Builds the task for one direction from a corpus' gold alignment.
    /// Queries without any gold partner are excluded.
    pub fn from_corpus(corpus: &Corpus, direction: Direction) -> Result<Self> {
        let (query_modality, target_modality) = match direction {
            Direction::ImageRetrieval => (Modality::Caption, Modality::Image),
            Direction::TextRetrieval => (Modality::Image, Modality::Caption),
        };
        let targets = corpus.ids_of(target_modality);
        let mut queries = Vec::new();
        let mut gold = Vec::new();
        for id in corpus.ids_of(query_modality) {
            let partners: Vec<u32> = match direction {
                Direction::ImageRetrieval => corpus.gold_images(id).to_vec(),
                Direction::TextRetrieval => corpus.gold_captions(id).to_vec(),
            };
            if !partners.is_empty() {
                queries.push(id);
                gold.push(partners);
            }
        }
        if queries.is_empty() {
            return Err(Error::InvalidSpec(
                "no queries with gold targets for this direction".into(),
            ));
        }
        Ok(EvalTask {
            direction,
            queries,
            targets,
            gold,
        })
    }

    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        for &id in self.queries.iter().chain(&self.targets) {
            if corpus.item(id).is_none() {
                return Err(Error::UnknownItem { id });
            }
        }
        for (q, partners) in self.queries.iter().zip(&self.gold) {
            if !partners.iter().any(|g| self.targets.contains(g)) {
                return Err(Error::InvalidSpec(alloc::format!(
                    "query {q} has no gold target in the target set"
                )));
            }
        }
        Ok(())
    }
}

/// Extends the target set with distractor ids; queries and gold labels stay
/// unchanged. Distractors must be disjoint from the targets and never gold.
pub fn augment_with_distractors(task: &EvalTask, distractor_ids: &[u32]) -> Result<EvalTask> {
    let mut augmented = task.clone();
    for &id in distractor_ids {
        if task.targets.contains(&id) || distractor_ids.iter().filter(|&&d| d == id).count() > 1 {
            return Err(Error::DuplicateId { id });
        }
        if task.gold.iter().any(|g| g.contains(&id)) {
            return Err(Error::InvalidSpec(alloc::format!(
                "distractor {id} is a gold target"
            )));
        }
    }
    augmented.targets.extend_from_slice(distractor_ids);
    Ok(augmented)
}

/// Fraction of queries with any gold target inside their top-M entries.
pub fn recall_at_m(
    queries: &[u32],
    rankings: &[Ranking],
    gold: &[Vec<u32>],
    m: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::InvalidSpec("recall over zero queries".into()));
    }
    let mut hits = 0usize;
    for (&query_id, partners) in queries.iter().zip(gold) {
        let ranking = rankings
            .iter()
            .find(|r| r.query_id == query_id)
            .ok_or(Error::MissingRanking { query_id })?;
        let top = ranking.entries.iter().take(m);
        let mut hit = false;
        for entry in top {
            if partners.contains(&entry.item_id) {
                hit = true;
                break;
            }
        }
        hits += hit as usize;
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// 1-based rank of the first gold target, when present in the ranking.
pub fn first_gold_rank(ranking: &Ranking, gold: &[u32]) -> Option<u32> {
    ranking
        .entries
        .iter()
        .position(|e| gold.contains(&e.item_id))
        .map(|p| p as u32 + 1)
}

/// Recall scores for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionScores {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    /// Per-query 1-based rank of the first gold hit; None when no gold
    /// target appeared in the ranking.
    pub ranks: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub image_retrieval: Option<DirectionScores>,
    pub text_retrieval: Option<DirectionScores>,
    pub counters: Counters,
    pub elapsed_nanos: u64,
}

impl EvalReport {
    pub fn empty() -> Self {
        EvalReport {
            image_retrieval: None,
            text_retrieval: None,
            counters: Counters::default(),
            elapsed_nanos: 0,
        }
    }
}

/// Arithmetic mean of the six recalls: R@{1,5,10} for both directions.
pub fn mean_recall(report: &EvalReport) -> Result<f64> {
    let ir = report.image_retrieval.as_ref().ok_or(Error::MissingDirection)?;
    let tr = report.text_retrieval.as_ref().ok_or(Error::MissingDirection)?;
    Ok((ir.r1 + ir.r5 + ir.r10 + tr.r1 + tr.r5 + tr.r10) / 6.0)
}

/// Which retrieval strategy the evaluation drives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Be,
    Ce,
    Coop(CoopConfig),
}

/// Runs one directional task: builds the needed index once, ranks every
/// query, and computes recalls, ranks, counters, and wall time.
pub fn evaluate(
    params: &ModelParams,
    corpus: &Corpus,
    task: &EvalTask,
    strategy: &Strategy,
    clock: &mut dyn Clock,
) -> Result<EvalReport> {
    task.validate(corpus)?;
    let target_items: Vec<&Item> = task
        .targets
        .iter()
        .map(|&id| corpus.item(id).ok_or(Error::UnknownItem { id }))
        .collect::<Result<_>>()?;
    let index = match strategy {
        Strategy::Be | Strategy::Coop(_) => Some(build_index(params, &target_items)?),
        Strategy::Ce => None,
    };
    let top_m = match strategy {
        Strategy::Be | Strategy::Ce => task.targets.len(),
        Strategy::Coop(c) => {
            c.validate()?;
            c.k
        }
    };

    let start = clock.now_nanos();
    let mut rankings = Vec::with_capacity(task.queries.len());
    for &query_id in &task.queries {
        let query = corpus.item(query_id).ok_or(Error::UnknownItem { id: query_id })?;
        let ranking = match strategy {
            Strategy::Be => retrieve_be(query, index.as_ref().expect("index"), params, top_m)?,
            Strategy::Ce => retrieve_ce(query, &target_items, params, top_m)?,
            Strategy::Coop(c) => retrieve_coop(
                query,
                index.as_ref().expect("index"),
                corpus,
                params,
                c,
                top_m,
            )?,
        };
        rankings.push(ranking);
    }
    let elapsed_nanos = clock.now_nanos().saturating_sub(start);

    let mut counters = Counters::default();
    for r in &rankings {
        counters.add(r.counters);
    }
    let ranks: Vec<Option<u32>> = rankings
        .iter()
        .zip(&task.gold)
        .map(|(r, g)| first_gold_rank(r, g))
        .collect();
    let scores = DirectionScores {
        r1: recall_at_m(&task.queries, &rankings, &task.gold, 1)?,
        r5: recall_at_m(&task.queries, &rankings, &task.gold, 5)?,
        r10: recall_at_m(&task.queries, &rankings, &task.gold, 10)?,
        ranks,
    };
    let mut report = EvalReport::empty();
    report.counters = counters;
    report.elapsed_nanos = elapsed_nanos;
    match task.direction {
        Direction::ImageRetrieval => report.image_retrieval = Some(scores),
        Direction::TextRetrieval => report.text_retrieval = Some(scores),
    }
    Ok(report)
}

/// Evaluates both retrieval directions over a corpus' gold alignment and
/// merges them into one report (so mean Recall is defined).
pub fn evaluate_both(
    params: &ModelParams,
    corpus: &Corpus,
    strategy: &Strategy,
    clock: &mut dyn Clock,
) -> Result<EvalReport> {
    let ir_task = EvalTask::from_corpus(corpus, Direction::ImageRetrieval)?;
    let tr_task = EvalTask::from_corpus(corpus, Direction::TextRetrieval)?;
    let ir = evaluate(params, corpus, &ir_task, strategy, clock)?;
    let tr = evaluate(params, corpus, &tr_task, strategy, clock)?;
    let mut report = EvalReport::empty();
    report.image_retrieval = ir.image_retrieval;
    report.text_retrieval = tr.text_retrieval;
    report.counters = ir.counters;
    report.counters.add(tr.counters);
    report.elapsed_nanos = ir.elapsed_nanos + tr.elapsed_nanos;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::RankEntry;
    use alloc::vec;

    fn ranking(query_id: u32, ids: &[u32]) -> Ranking {
        Ranking {
            query_id,
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, &id)| RankEntry {
                    item_id: id,
                    be_score: None,
                    ce_score: None,
                    final_score: 1.0 - i as f64 * 0.1,
                })
                .collect(),
            counters: Counters::default(),
        }
    }

    #[test]
    fn recall_counts_hits_at_cutoffs() {
        // Gold at ranks 1 and 3.
        let queries = vec![0, 1];
        let rankings = vec![ranking(0, &[10, 11, 12]), ranking(1, &[20, 21, 22])];
        let gold = vec![vec![10], vec![22]];
        assert_eq!(recall_at_m(&queries, &rankings, &gold, 1).unwrap(), 0.5);
        assert_eq!(recall_at_m(&queries, &rankings, &gold, 3).unwrap(), 1.0);
    }

    #[test]
    fn absent_gold_gives_zero() {
        let queries = vec![0];
        let rankings = vec![ranking(0, &[1, 2, 3])];
        let gold = vec![vec![99]];
        assert_eq!(recall_at_m(&queries, &rankings, &gold, 3).unwrap(), 0.0);
    }

    #[test]
    fn any_gold_in_top_m_counts_for_multi_gold_queries() {
        let queries = vec![0];
        let rankings = vec![ranking(0, &[5, 7, 9])];
        // One gold at rank 2, the other absent entirely.
        let gold = vec![vec![7, 1000]];
        assert_eq!(recall_at_m(&queries, &rankings, &gold, 2).unwrap(), 1.0);
        assert_eq!(recall_at_m(&queries, &rankings, &gold, 1).unwrap(), 0.0);
    }

    #[test]
    fn recall_is_monotone_in_the_cutoff() {
        let mut rng = crate::rng::Rng::new(44);
        for _ in 0..50 {
            let n = 2 + rng.below(8);
            let queries: Vec<u32> = (0..n as u32).collect();
            let rankings: Vec<Ranking> = queries
                .iter()
                .map(|&q| {
                    let mut ids: Vec<u32> = (100..112).collect();
                    rng.shuffle(&mut ids);
                    ids.truncate(1 + rng.below(11));
                    ranking(q, &ids)
                })
                .collect();
            let gold: Vec<Vec<u32>> = queries
                .iter()
                .map(|_| alloc::vec![100 + rng.below(12) as u32])
                .collect();
            let mut last = 0.0;
            for m in 1..=12 {
                let r = recall_at_m(&queries, &rankings, &gold, m).unwrap();
                assert!(r >= last, "recall dropped from {last} to {r} at M={m}");
                last = r;
            }
        }
    }

    #[test]
    fn missing_ranking_is_an_error() {
        let queries = vec![0, 1];
        let rankings = vec![ranking(0, &[1])];
        let gold = vec![vec![1], vec![2]];
        assert_eq!(
            recall_at_m(&queries, &rankings, &gold, 1).unwrap_err(),
            Error::MissingRanking { query_id: 1 }
        );
    }

    fn scores(r1: f64, r5: f64, r10: f64) -> DirectionScores {
        DirectionScores {
            r1,
            r5,
            r10,
            ranks: vec![],
        }
    }

    #[test]
    fn mean_recall_of_reported_joint_coop_values() {
        // Six recall values from a published cooperative run; their mean is
        // 92.05 (here on the 0-1 scale).
        let mut report = EvalReport::empty();
        report.image_retrieval = Some(scores(0.764, 0.936, 0.962));
        report.text_retrieval = Some(scores(0.894, 0.977, 0.990));
        let mr = mean_recall(&report).unwrap();
        assert!((mr - 0.9205).abs() < 1e-12, "got {mr}");
    }

    #[test]
    fn mean_recall_requires_both_directions() {
        let mut report = EvalReport::empty();
        report.image_retrieval = Some(scores(1.0, 1.0, 1.0));
        assert_eq!(mean_recall(&report).unwrap_err(), Error::MissingDirection);
        report.text_retrieval = Some(scores(1.0, 1.0, 1.0));
        assert_eq!(mean_recall(&report).unwrap(), 1.0);
    }

    #[test]
    fn mean_recall_constant_inputs() {
        let mut report = EvalReport::empty();
        report.image_retrieval = Some(scores(0.0, 0.0, 0.0));
        report.text_retrieval = Some(scores(0.0, 0.0, 0.0));
        assert_eq!(mean_recall(&report).unwrap(), 0.0);
    }

    #[test]
    fn augment_keeps_queries_and_gold() {
        let task = EvalTask {
            direction: Direction::ImageRetrieval,
            queries: vec![100],
            targets: vec![0, 1],
            gold: vec![vec![0]],
        };
        let same = augment_with_distractors(&task, &[]).unwrap();
        assert_eq!(same, task);
        let bigger = augment_with_distractors(&task, &[7, 8]).unwrap();
        assert_eq!(bigger.targets, vec![0, 1, 7, 8]);
        assert_eq!(bigger.queries, task.queries);
        assert_eq!(bigger.gold, task.gold);
        assert_eq!(
            augment_with_distractors(&task, &[1]).unwrap_err(),
            Error::DuplicateId { id: 1 }
        );
        assert!(augment_with_distractors(&task, &[0]).is_err());
    }
}

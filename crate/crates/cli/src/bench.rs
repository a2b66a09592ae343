//! Wall-clock latency benchmark for the three retrieval strategies.
//!
//! Indices are pre-built (targets pre-encoded) for the BE and Coop
//! strategies; the CE strategy processes every (query, target) pair per
//! query by construction. Query-side encoding is included for all
//! strategies and timings are medians over repeats on a single thread.

use std::time::Instant;

use cmrr_core::corpus::{generate_planted, Corpus, Modality, PlantedSpec};
use cmrr_core::index::build_index;
use cmrr_core::model::{init_params, LayerSkip, ModelConfig, ModelParams};
use cmrr_core::pipeline::{retrieve_be, retrieve_ce, retrieve_coop, CoopConfig, Ranking};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchStrategy {
    Be,
    Coop,
    Ce,
}

impl BenchStrategy {
    pub fn name(self) -> &'static str {
        match self {
            BenchStrategy::Be => "be",
            BenchStrategy::Coop => "coop",
            BenchStrategy::Ce => "ce",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "be" => Ok(BenchStrategy::Be),
            "coop" => Ok(BenchStrategy::Coop),
            "ce" => Ok(BenchStrategy::Ce),
            other => Err(CliError::Validation(format!(
                "unknown strategy '{other}' (expected be|coop|ce)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub strategy: BenchStrategy,
    pub collection_size: usize,
    pub median_nanos: u64,
    pub mean_nanos: u64,
    pub encode_calls: u64,
    pub cross_score_calls: u64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares latency slope in nanoseconds per collection item.
    pub slope_ce: Option<f64>,
    pub slope_coop: Option<f64>,
    pub slope_be: Option<f64>,
}

impl BenchReport {
    /// slope(CE) / slope(Coop); infinite when coop's slope is nonpositive.
    pub fn ce_over_coop_slope_ratio(&self) -> Option<f64> {
        match (self.slope_ce, self.slope_coop) {
            (Some(ce), Some(coop)) if coop > 0.0 => Some(ce / coop),
            (Some(_), Some(_)) => Some(f64::INFINITY),
            _ => None,
        }
    }

    pub fn median_at(&self, strategy: BenchStrategy, n: usize) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.strategy == strategy && r.collection_size == n)
            .map(|r| r.median_nanos)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub strategies: Vec<BenchStrategy>,
    pub repeats: usize,
    pub coop_k: usize,
    pub seed: u64,
    pub tokens_per_item: usize,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub trunk_layers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: vec![1_000, 10_000, 50_000],
            strategies: vec![BenchStrategy::Be, BenchStrategy::Coop, BenchStrategy::Ce],
            repeats: 7,
            coop_k: 20,
            seed: 0,
            // A deliberately heavier trunk: per-pair cross-encoding must
            // dwarf one row of the index scan, as it does at full scale.
            tokens_per_item: 8,
            feature_dim: 16,
            embed_dim: 48,
            trunk_layers: 4,
        }
    }
}

fn median(mut samples: Vec<u64>) -> u64 {
    samples.sort_unstable();
    samples[samples.len() / 2]
}

fn time_one(f: impl FnOnce() -> Ranking) -> (u64, Ranking) {
    let start = Instant::now();
    let ranking = f();
    (start.elapsed().as_nanos() as u64, ranking)
}

/// Runs the benchmark: per collection size, pre-builds the image index and
/// times single caption queries under each strategy.
pub fn bench_latency(config: &BenchConfig) -> Result<BenchReport> {
    if config.sizes.is_empty() || config.repeats == 0 {
        return Err(CliError::Validation(
            "bench needs at least one size and one repeat".into(),
        ));
    }
    let mut sorted_sizes = config.sizes.clone();
    sorted_sizes.sort_unstable();
    if sorted_sizes != config.sizes {
        return Err(CliError::Validation(
            "bench sizes must be sorted ascending".into(),
        ));
    }
    let model_config = ModelConfig {
        feature_dim: config.feature_dim,
        embed_dim: config.embed_dim,
        trunk_layers: config.trunk_layers,
        layer_skip: LayerSkip::Full,
        seed: config.seed ^ 0x6d6f64,
    };
    let params: ModelParams = init_params(&model_config)?;
    let mut rows = Vec::new();

    for &n in &config.sizes {
        let corpus: Corpus = generate_planted(&PlantedSpec {
            n_pairs: n,
            tokens_per_item: config.tokens_per_item,
            feature_dim: config.feature_dim,
            noise_sigma: 1.0,
            captions_per_image: 1,
            seed: config.seed ^ (n as u64),
        })?;
        let images: Vec<_> = corpus
            .items()
            .iter()
            .filter(|it| it.modality == Modality::Image)
            .collect();
        let index = build_index(&params, &images)?;
        let caption_ids = corpus.ids_of(Modality::Caption);
        let coop_config = CoopConfig {
            k: config.coop_k,
            ..CoopConfig::default()
        };

        for &strategy in &config.strategies {
            let mut samples = Vec::with_capacity(config.repeats);
            let mut counters = None;
            for rep in 0..config.repeats {
                let query = corpus
                    .item(caption_ids[rep % caption_ids.len()])
                    .expect("caption exists");
                let (nanos, ranking) = match strategy {
                    BenchStrategy::Be => {
                        time_one(|| retrieve_be(query, &index, &params, 10).expect("be"))
                    }
                    BenchStrategy::Coop => time_one(|| {
                        retrieve_coop(query, &index, &corpus, &params, &coop_config, 10)
                            .expect("coop")
                    }),
                    BenchStrategy::Ce => {
                        time_one(|| retrieve_ce(query, &images, &params, 10).expect("ce"))
                    }
                };
                samples.push(nanos);
                counters.get_or_insert(ranking.counters);
            }
            let counters = counters.expect("at least one repeat");
            let mean = samples.iter().sum::<u64>() / samples.len() as u64;
            rows.push(BenchRow {
                strategy,
                collection_size: n,
                median_nanos: median(samples),
                mean_nanos: mean,
                encode_calls: counters.encode_calls,
                cross_score_calls: counters.cross_score_calls,
            });
        }
    }

    let slope = |strategy: BenchStrategy| -> Option<f64> {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| (r.collection_size as f64, r.median_nanos as f64))
            .collect();
        if points.len() < 2 {
            return None;
        }
        let n = points.len() as f64;
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        let var: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
        Some(cov / var)
    };

    Ok(BenchReport {
        slope_ce: slope(BenchStrategy::Ce),
        slope_coop: slope(BenchStrategy::Coop),
        slope_be: slope(BenchStrategy::Be),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_match_strategy_contracts_at_small_scale() {
        let config = BenchConfig {
            sizes: vec![50, 100],
            repeats: 2,
            coop_k: 20,
            tokens_per_item: 2,
            embed_dim: 8,
            trunk_layers: 1,
            ..BenchConfig::default()
        };
        let report = bench_latency(&config).unwrap();
        for row in &report.rows {
            match row.strategy {
                BenchStrategy::Be => assert_eq!(row.cross_score_calls, 0),
                BenchStrategy::Coop => {
                    assert_eq!(row.cross_score_calls, 20.min(row.collection_size) as u64)
                }
                BenchStrategy::Ce => {
                    assert_eq!(row.cross_score_calls, row.collection_size as u64)
                }
            }
        }
    }

    #[test]
    fn unsorted_sizes_are_rejected() {
        let config = BenchConfig {
            sizes: vec![100, 50],
            ..BenchConfig::default()
        };
        assert!(bench_latency(&config).is_err());
    }
}

//! Pre-encoded embedding store with exact, deterministic top-k cosine
//! retrieval.
//!
//! Stored vectors are L2-normalized f32 rows in one contiguous buffer, so
//! the scan is a pure dot product over row-major memory. Results order by
//! descending score with ties broken by ascending id, which makes every
//! downstream ranking reproducible. `topk_batch` partitions the rows into
//! shards and merges per-shard top-k heaps under the same order, so shard
//! count never changes the output.

use alloc::vec::Vec;

use crate::corpus::Item;
use crate::model::{encode, ModelParams};
use crate::vecmath;
use crate::{Error, Result};

/// Embeddings below this norm are rejected at build time.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<u32>,
    dim: usize,
    /// len x dim row-major unit vectors.
    vectors: Vec<f32>,
}

/// Memory accounting for the vector payload and id list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    pub vector_bytes: usize,
    pub id_bytes: usize,
}

impl MemoryReport {
    pub fn total(&self) -> usize {
        self.vector_bytes + self.id_bytes
    }
}

impl EmbeddingIndex {
    /// Builds an index from pre-normalized f32 rows. Used by file loading;
    /// `build_index` is the encoding entry point.
    pub fn from_parts(ids: Vec<u32>, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("index dim must be >= 1".into()));
        }
        if vectors.len() != ids.len() * dim {
            return Err(Error::InvalidSpec(
                "index vector payload does not match id count".into(),
            ));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::InvalidSpec("index ids must be unique".into()));
        }
        for (row, &id) in ids.iter().enumerate() {
            let v = &vectors[row * dim..(row + 1) * dim];
            let norm2: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum();
            if (libm::sqrt(norm2) - 1.0).abs() > 1e-6 {
                return Err(Error::ZeroNormEmbedding { id });
            }
        }
        Ok(EmbeddingIndex { ids, dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// N * E * 4 bytes of vectors plus 4 bytes per id.
    pub fn memory(&self) -> MemoryReport {
        MemoryReport {
            vector_bytes: self.len() * self.dim * core::mem::size_of::<f32>(),
            id_bytes: self.len() * core::mem::size_of::<u32>(),
        }
    }
}

/// Encodes and L2-normalizes every item. Items whose embedding norm falls
/// below the floor are rejected with their id.
pub fn build_index(params: &ModelParams, items: &[&Item]) -> Result<EmbeddingIndex> {
    let dim = params.config.embed_dim;
    let mut ids = Vec::with_capacity(items.len());
    let mut vectors = Vec::with_capacity(items.len() * dim);
    for item in items {
        let embedding = encode(params, item)?;
        let norm = vecmath::norm(&embedding);
        if norm < NORM_FLOOR {
            return Err(Error::ZeroNormEmbedding { id: item.id });
        }
        ids.push(item.id);
        vectors.extend(embedding.iter().map(|&v| (v / norm) as f32));
    }
    Ok(EmbeddingIndex { ids, dim, vectors })
}

/// Rank order: higher score first, then smaller id. Scores come from dot
/// products of finite unit vectors and are always finite.
#[inline]
fn ranks_before(a: (f32, u32), b: (f32, u32)) -> bool {
    match a.0.total_cmp(&b.0) {
        core::cmp::Ordering::Greater => true,
        core::cmp::Ordering::Less => false,
        core::cmp::Ordering::Equal => a.1 < b.1,
    }
}

fn scan_rows(
    index: &EmbeddingIndex,
    query: &[f32],
    rows: core::ops::Range<usize>,
    k: usize,
    out: &mut Vec<(u32, f32)>,
) {
    // Bounded insertion keeps the same total order as a full sort.
    for row in rows {
        let v = index.row(row);
        let mut score = 0.0f32;
        for (a, b) in v.iter().zip(query) {
            score += a * b;
        }
        let id = index.ids[row];
        if out.len() == k {
            let worst = out[out.len() - 1];
            if !ranks_before((score, id), (worst.1, worst.0)) {
                continue;
            }
            out.pop();
        }
        let pos = out
            .binary_search_by(|&(pid, ps)| {
                if ranks_before((ps, pid), (score, id)) {
                    core::cmp::Ordering::Less
                } else {
                    core::cmp::Ordering::Greater
                }
            })
            .unwrap_err();
        out.insert(pos, (id, score));
    }
}

fn normalize_query(index: &EmbeddingIndex, query: &[f64]) -> Result<Vec<f32>> {
    if query.len() != index.dim {
        return Err(Error::DimensionMismatch {
            expected: index.dim,
            actual: query.len(),
        });
    }
    let norm = vecmath::norm(query);
    if norm < NORM_FLOOR {
        return Err(Error::ZeroNormQuery);
    }
    Ok(query.iter().map(|&v| (v / norm) as f32).collect())
}

/// Exact top-k scan: cosine equals dot product because stored vectors are
/// unit-norm and the query is normalized internally. Returns min(k, N)
/// entries sorted by descending score, ties by ascending id.
pub fn topk(index: &EmbeddingIndex, query: &[f64], k: usize) -> Result<Vec<(u32, f32)>> {
    if k == 0 {
        return Err(Error::InvalidSpec("topk requires k >= 1".into()));
    }
    let q = normalize_query(index, query)?;
    let mut out = Vec::with_capacity(k.min(index.len()));
    scan_rows(index, &q, 0..index.len(), k, &mut out);
    Ok(out)
}

/// Per-query top-k over `shards` contiguous row partitions. The per-shard
/// results merge under the same rank order, so the output is identical to
/// sequential `topk` for any shard count.
pub fn topk_batch(
    index: &EmbeddingIndex,
    queries: &[Vec<f64>],
    k: usize,
    shards: usize,
) -> Result<Vec<Vec<(u32, f32)>>> {
    if shards == 0 {
        return Err(Error::InvalidSpec("shards must be >= 1".into()));
    }
    if k == 0 {
        return Err(Error::InvalidSpec("topk requires k >= 1".into()));
    }
    let n = index.len();
    let chunk = n.div_ceil(shards).max(1);
    let mut results = Vec::with_capacity(queries.len());
    for query in queries {
        let q = normalize_query(index, query)?;
        let mut merged: Vec<(u32, f32)> = Vec::with_capacity(k.min(n));
        let mut shard_out = Vec::with_capacity(k.min(n));
        let mut start = 0;
        while start < n {
            let end = (start + chunk).min(n);
            shard_out.clear();
            scan_rows(index, &q, start..end, k, &mut shard_out);
            for &(id, score) in &shard_out {
                if merged.len() == k {
                    let worst = merged[merged.len() - 1];
                    if !ranks_before((score, id), (worst.1, worst.0)) {
                        continue;
                    }
                    merged.pop();
                }
                let pos = merged
                    .binary_search_by(|&(pid, ps)| {
                        if ranks_before((ps, pid), (score, id)) {
                            core::cmp::Ordering::Less
                        } else {
                            core::cmp::Ordering::Greater
                        }
                    })
                    .unwrap_err();
                merged.insert(pos, (id, score));
            }
            start = end;
        }
        results.push(merged);
    }
    Ok(results)
}

//! Small dense-vector helpers used by the model, losses, and index.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Norm below which an embedding is treated as zero (cosine undefined).
pub const NORM_FLOOR: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity; errors when either vector has near-zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Err(Error::ZeroNormQuery);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Gradient of cos(a, b) with respect to `a`.
///
/// d cos / da = b / (|a||b|) - cos(a,b) * a / |a|^2
pub fn cosine_grad_wrt_first(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let na = norm(a);
    let nb = norm(b);
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Err(Error::ZeroNormQuery);
    }
    let c = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let self_scale = c / (na * na);
    Ok(a.iter()
        .zip(b)
        .map(|(ai, bi)| bi * inv - ai * self_scale)
        .collect())
}

/// In-place `acc += scale * v`.
pub fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Normalizes to unit L2 norm; errors below the norm floor.
pub fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n < NORM_FLOOR {
        return Err(Error::ZeroNormQuery);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Mean over rows, summed in a canonical per-column order.
///
/// Each column's addends are sorted by total order before summation, so the
/// result is exactly invariant under any permutation of the rows.
pub fn canonical_row_mean(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    debug_assert!(!rows.is_empty());
    let count = rows.len() as f64;
    let mut out = Vec::with_capacity(dim);
    let mut column: Vec<f64> = Vec::with_capacity(rows.len());
    for d in 0..dim {
        column.clear();
        column.extend(rows.iter().map(|r| r[d]));
        column.sort_unstable_by(f64::total_cmp);
        let mut acc = 0.0;
        for x in &column {
            acc += x;
        }
        out.push(acc / count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dot_and_norm() {
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
        assert!((norm(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_of_parallel_vectors_is_one() {
        assert!((cosine(&[2.0, 0.0], &[5.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cosine_grad_matches_finite_difference() {
        let a = vec![0.3, -1.2, 0.7];
        let b = vec![1.1, 0.4, -0.2];
        let g = cosine_grad_wrt_first(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[i] += h;
            am[i] -= h;
            let fd = (cosine(&ap, &b).unwrap() - cosine(&am, &b).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-8, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn canonical_mean_is_permutation_invariant() {
        let rows = vec![
            vec![0.1, 1e16],
            vec![0.2, -1e16],
            vec![0.3, 1.0],
            vec![0.4, 2.0],
        ];
        let mut permuted = rows.clone();
        permuted.swap(0, 3);
        permuted.swap(1, 2);
        let a = canonical_row_mean(&rows, 2);
        let b = canonical_row_mean(&permuted, 2);
        assert_eq!(a, b, "must be bitwise identical");
    }
}

//! Baseline selectors: random designs, variance-only greedy, distance-based
//! k-centers sampling and uncertainty ranking.

use super::{greedy_fast, DesignResult, GreedyOptions};
use crate::criteria::{CriterionParams, Tradeoff};
use crate::error::{OedError, Result};
use crate::kernels::{checksum_matrix, GramMatrix};
use crate::pool::PoolMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Uniform sample of `n` of `m` indices without replacement. Scores carry no
/// criterion information and are zero-filled; the pool checksum is left empty
/// for the caller to fill in when a pool is at hand.
pub fn select_random(m: usize, n: usize, seed: u64) -> Result<DesignResult> {
    if n == 0 || n > m {
        return Err(OedError::InvalidInput(format!(
            "design size {n} must satisfy 1 ≤ n ≤ {m}"
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, m, n).into_vec();
    Ok(DesignResult {
        method: "random".into(),
        lambda: 0.0,
        t: Tradeoff::Finite(0.0),
        indices,
        scores: vec![0.0; n],
        seed: Some(seed),
        pool_checksum: String::new(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        step_times: Vec::new(),
    })
}

/// Greedy on the variance-only (t = +∞) criterion: a pass-through to
/// `greedy_fast` with the method tag swapped.
pub fn select_variance_only(k: &GramMatrix, n: usize, lambda: f64) -> Result<DesignResult> {
    let params = CriterionParams::variance_only(lambda);
    let mut result = greedy_fast(k, n, &params, &GreedyOptions::default())?;
    result.method = "variance".into();
    Ok(result)
}

/// Probabilistic k-centers: first center uniform, each next center drawn with
/// probability proportional to its squared distance to the nearest selected
/// center. Duplicates of a center get probability zero; an all-zero step
/// falls back to uniform. Scores record the covering radius² after each pick.
pub fn select_k_centers(pool: &PoolMatrix, n: usize, seed: u64) -> Result<DesignResult> {
    let v = pool.matrix();
    k_centers_impl(
        pool.num_points(),
        n,
        seed,
        |a, b| (v.row(a) - v.row(b)).norm_squared(),
        checksum_matrix(v),
    )
}

/// K-centers in kernel space: squared distances read off the Gram matrix as
/// `K_ii + K_jj − 2K_ij`. Coincides with `select_k_centers` on a linear-kernel
/// Gram of the same pool.
pub fn select_k_centers_gram(k: &GramMatrix, n: usize, seed: u64) -> Result<DesignResult> {
    let g = k.matrix();
    k_centers_impl(
        k.size(),
        n,
        seed,
        |a, b| (g[(a, a)] + g[(b, b)] - 2.0 * g[(a, b)]).max(0.0),
        k.checksum(),
    )
}

fn k_centers_impl(
    m: usize,
    n: usize,
    seed: u64,
    dist2: impl Fn(usize, usize) -> f64,
    checksum: String,
) -> Result<DesignResult> {
    if n == 0 || n > m {
        return Err(OedError::InvalidInput(format!(
            "design size {n} must satisfy 1 ≤ n ≤ {m}"
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let first = rng.random_range(0..m);
    let mut selected = vec![first];
    let mut in_s = vec![false; m];
    in_s[first] = true;
    let mut min_d2: Vec<f64> = (0..m).map(|i| dist2(i, first)).collect();
    let covering = |d: &[f64]| d.iter().cloned().fold(0.0f64, f64::max);
    let mut scores = vec![covering(&min_d2)];

    while selected.len() < n {
        let remaining: Vec<usize> = (0..m).filter(|&i| !in_s[i]).collect();
        let total: f64 = remaining.iter().map(|&i| min_d2[i]).sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = *remaining.last().unwrap();
            for &i in &remaining {
                acc += min_d2[i];
                if acc >= u {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            remaining[rng.random_range(0..remaining.len())]
        };
        in_s[pick] = true;
        selected.push(pick);
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = dist2(i, pick);
            if nd < *d {
                *d = nd;
            }
        }
        scores.push(covering(&min_d2));
    }

    Ok(DesignResult {
        method: "kcenters".into(),
        lambda: 0.0,
        t: Tradeoff::Finite(0.0),
        indices: selected,
        scores,
        seed: Some(seed),
        pool_checksum: checksum,
        wall_time_secs: start.elapsed().as_secs_f64(),
        step_times: Vec::new(),
    })
}

/// Per-row uncertainty of multi-output predictions against the one-hot label
/// vectors: `1 − max_i p_i(x)` with
/// `p_i(x) = (2π)^{−L/2} exp(−‖y_i − f(x)‖²/2)`. Higher = more uncertain;
/// exp underflow saturates the score toward 1.
pub fn uncertainty_scores(predictions: &DMatrix<f64>, l: usize) -> Result<Vec<f64>> {
    if l == 0 || predictions.ncols() != l {
        return Err(OedError::DimensionMismatch(format!(
            "predictions have {} columns, expected L = {l}",
            predictions.ncols()
        )));
    }
    let log_norm = -(l as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln();
    let scores = (0..predictions.nrows())
        .map(|r| {
            let f = predictions.row(r);
            let f2 = f.norm_squared();
            let max_p = (0..l)
                .map(|i| {
                    // ‖y_i − f‖² = ‖f‖² − 2f_i + 1 for one-hot y_i
                    let d2 = f2 - 2.0 * f[i] + 1.0;
                    (log_norm - 0.5 * d2).exp()
                })
                .fold(0.0f64, f64::max);
            1.0 - max_p
        })
        .collect();
    Ok(scores)
}

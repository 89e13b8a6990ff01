//! Feature-space greedy for the interpolation regime.
//!
//! The kernel-side greedy stops once `K_SS` exhausts the pool's rank, but the
//! criterion itself stays well defined for larger designs through the
//! pseudoinverse of `M = V_SᵀV_S`. This selector works directly with
//! pool-side projections of `M⁺` (rank-one pseudoinverse update), so it keeps
//! going past `n = rank(V)` — exactly what a design-size sweep across the
//! interpolation threshold needs. λ = 0 only.
//!
//! Maintained caches (m × m): `T₁ = V M⁺ Vᵀ` and `T₂ = V P Vᵀ` with
//! `P = M⁺M`, giving `bias = Tr(VVᵀ) − Tr(T₂)` and `variance = Tr(T₁)`
//! (at λ = 0, `M⁺²M = M⁺`). Appending row `x = V_i` splits into the two
//! classic pseudoinverse-update cases on `h = (I−P)x`:
//!
//! * `‖h‖² > 0` (rank grows): with `k = M⁺x`, `β = 1 + xᵀk`,
//!   `Δbias = −‖Vh‖²/‖h‖²`,
//!   `Δvar  = −2(Vk)ᵀVh/‖h‖² + β‖Vh‖²/‖h‖⁴`;
//! * `h = 0` (x in the span): `Δbias = 0`, `Δvar = −‖Vk‖²/β`.
//!
//! All per-candidate quantities are columns of the caches: `Vk = T₁_{:,i}`,
//! `Vh = G_{:,i} − T₂_{:,i}` with `G = VVᵀ`, `‖h‖² = G_ii − T₂_ii`,
//! `β = 1 + T₁_ii`.

use super::{DesignResult, REFRESH_INTERVAL};
use crate::criteria::{CriterionParams, Tradeoff};
use crate::error::{OedError, Result};
use crate::kernels::checksum_matrix;
use crate::linalg;
use crate::pool::PoolMatrix;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::time::Instant;

struct PrimalState {
    g: DMatrix<f64>,
    t1: DMatrix<f64>,
    t2: DMatrix<f64>,
    bias: f64,
    variance: f64,
    span_eps: f64,
}

impl PrimalState {
    fn new(pool: &PoolMatrix) -> Self {
        let v = pool.matrix();
        let g = v * v.transpose();
        let m = pool.num_points();
        let max_diag = g.diagonal().iter().fold(0.0f64, |a, &v| a.max(v));
        Self {
            bias: g.trace(),
            variance: 0.0,
            t1: DMatrix::zeros(m, m),
            t2: DMatrix::zeros(m, m),
            span_eps: 1e-10 * max_diag.max(f64::MIN_POSITIVE),
            g,
        }
    }

    fn objective(&self, t: Tradeoff) -> f64 {
        match t {
            Tradeoff::Finite(t) => self.bias + t * self.variance,
            Tradeoff::Infinite => self.variance,
        }
    }

    /// (Δbias, Δvariance) of appending pool row `i`.
    fn deltas(&self, i: usize) -> (f64, f64) {
        let hh = self.g[(i, i)] - self.t2[(i, i)];
        let beta = 1.0 + self.t1[(i, i)];
        if hh > self.span_eps {
            let vh = self.g.column(i) - self.t2.column(i);
            let vk = self.t1.column(i);
            let vh2 = vh.norm_squared();
            let d_bias = -vh2 / hh;
            let d_var = -2.0 * vk.dot(&vh) / hh + beta * vh2 / (hh * hh);
            (d_bias, d_var)
        } else {
            let d_var = -self.t1.column(i).norm_squared() / beta;
            (0.0, d_var)
        }
    }

    fn commit(&mut self, i: usize) {
        let hh = self.g[(i, i)] - self.t2[(i, i)];
        let beta = 1.0 + self.t1[(i, i)];
        let (d_bias, d_var) = self.deltas(i);
        if hh > self.span_eps {
            let vh: DVector<f64> = self.g.column(i) - self.t2.column(i);
            let vk: DVector<f64> = self.t1.column(i).into_owned();
            self.t1.ger(-1.0 / hh, &vk, &vh, 1.0);
            self.t1.ger(-1.0 / hh, &vh, &vk, 1.0);
            self.t1.ger(beta / (hh * hh), &vh, &vh, 1.0);
            self.t2.ger(1.0 / hh, &vh, &vh, 1.0);
        } else {
            let vk: DVector<f64> = self.t1.column(i).into_owned();
            self.t1.ger(-1.0 / beta, &vk, &vk, 1.0);
        }
        self.bias += d_bias;
        self.variance += d_var;
    }

    /// From-scratch rebuild of the caches for the given design.
    fn refresh(&mut self, pool: &PoolMatrix, selected: &[usize]) {
        let v = pool.matrix();
        let vs = pool.select_rows(selected);
        let m_mat = vs.transpose() * &vs;
        let mdag = linalg::sym_pinv(&m_mat).0;
        let vm = v * &mdag;
        self.t1 = &vm * v.transpose();
        self.t2 = &vm * &m_mat * v.transpose();
        self.bias = self.g.trace() - self.t2.trace();
        self.variance = self.t1.trace();
    }
}

/// Greedy minimization of the pool criterion in feature space at λ = 0,
/// supporting designs beyond the pool rank. `method` tags the result.
pub fn greedy_primal(
    pool: &PoolMatrix,
    n: usize,
    params: &CriterionParams,
    method: &str,
) -> Result<DesignResult> {
    if params.lambda != 0.0 {
        return Err(OedError::InvalidInput(
            "primal greedy supports lambda = 0 only".into(),
        ));
    }
    let m = pool.num_points();
    if n == 0 || n > m {
        return Err(OedError::InvalidInput(format!(
            "design size {n} must satisfy 1 ≤ n ≤ {m}"
        )));
    }
    let start = Instant::now();
    let mut state = PrimalState::new(pool);
    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut in_s = vec![false; m];
    let mut scores = Vec::with_capacity(n);
    let mut step_times = Vec::with_capacity(n);

    while selected.len() < n {
        let step_start = Instant::now();
        let best = (0..m)
            .into_par_iter()
            .filter(|&i| !in_s[i])
            .map(|i| {
                let (d_bias, d_var) = state.deltas(i);
                let delta = match params.t {
                    Tradeoff::Finite(t) => d_bias + t * d_var,
                    Tradeoff::Infinite => d_var,
                };
                (delta, i)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, idx)) = best else {
            return Err(OedError::DegeneratePool {
                achieved: selected.len(),
                requested: n,
            });
        };
        state.commit(idx);
        selected.push(idx);
        in_s[idx] = true;
        if selected.len().is_multiple_of(REFRESH_INTERVAL) {
            state.refresh(pool, &selected);
        }
        scores.push(state.objective(params.t));
        step_times.push(step_start.elapsed().as_secs_f64());
    }

    Ok(DesignResult {
        method: method.into(),
        lambda: 0.0,
        t: params.t,
        indices: selected,
        scores,
        seed: None,
        pool_checksum: checksum_matrix(pool.matrix()),
        wall_time_secs: start.elapsed().as_secs_f64(),
        step_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{psi_bar, psi_bar_parts};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_pool(seed: u64, m: usize, d: usize) -> PoolMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PoolMatrix::new(DMatrix::from_fn(m, d, |_, _| rng.sample(StandardNormal))).unwrap()
    }

    fn brute_force_sequence(pool: &PoolMatrix, n: usize, params: &CriterionParams) -> Vec<usize> {
        let m = pool.num_points();
        let mut s: Vec<usize> = Vec::new();
        for _ in 0..n {
            let mut best = (f64::INFINITY, usize::MAX);
            for i in 0..m {
                if s.contains(&i) {
                    continue;
                }
                let mut trial = s.clone();
                trial.push(i);
                let v = psi_bar(pool, &trial, params).unwrap();
                if v < best.0 || (v == best.0 && i < best.1) {
                    best = (v, i);
                }
            }
            s.push(best.1);
        }
        s
    }

    #[test]
    fn matches_brute_force_past_the_rank() {
        // d = 3, designs up to size 6: crosses the interpolation threshold.
        // The bias-only case stays below the rank: past it every independent
        // candidate zeroes the bias exactly and the argmin is all ties.
        let pool = random_pool(21, 8, 3);
        for (params, n) in [
            (
                CriterionParams::new(0.0, Tradeoff::Finite(0.04)).unwrap(),
                6,
            ),
            (CriterionParams::bias_only(0.0), 2),
            (CriterionParams::variance_only(0.0), 6),
        ] {
            let r = greedy_primal(&pool, n, &params, "greedy-primal").unwrap();
            let oracle = brute_force_sequence(&pool, n, &params);
            assert_eq!(r.indices, oracle, "params {params:?}");
            for step in 0..r.indices.len() {
                let v = psi_bar(&pool, &r.indices[..=step], &params).unwrap();
                assert!(
                    (r.scores[step] - v).abs() <= 1e-8 * v.abs().max(1.0),
                    "score drift at step {step}: {} vs {v}",
                    r.scores[step]
                );
            }
        }
    }

    #[test]
    fn incremental_parts_match_direct_evaluation() {
        let pool = random_pool(22, 10, 4);
        let mut state = PrimalState::new(&pool);
        let design = [3usize, 7, 1, 4, 9, 0];
        let mut s: Vec<usize> = Vec::new();
        for &i in &design {
            state.commit(i);
            s.push(i);
            let (bias, var) = psi_bar_parts(&pool, &s, 0.0).unwrap();
            assert!((state.bias - bias).abs() <= 1e-8 * bias.max(1.0));
            assert!((state.variance - var).abs() <= 1e-8 * var.max(1.0));
        }
    }

    #[test]
    fn duplicate_rows_are_representable() {
        // a duplicated row lands in the span (case 2) and still commits
        let pool = PoolMatrix::new(DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        let params = CriterionParams::new(0.0, Tradeoff::Finite(0.1)).unwrap();
        let r = greedy_primal(&pool, 3, &params, "greedy-primal").unwrap();
        assert_eq!(r.indices.len(), 3);
        let (bias, var) = psi_bar_parts(&pool, &r.indices, 0.0).unwrap();
        assert!((r.scores[2] - (bias + 0.1 * var)).abs() <= 1e-10);
    }

    #[test]
    fn rejects_positive_lambda() {
        let pool = random_pool(23, 4, 2);
        let params = CriterionParams::new(0.5, Tradeoff::Finite(0.0)).unwrap();
        assert!(greedy_primal(&pool, 2, &params, "x").is_err());
    }
}

//! Experiment drivers: the synthetic double-descent study, kernel-regression
//! design curves, and the t = 0 vs t = λ comparison.
//!
//! Determinism contract: every experiment derives all randomness from one
//! ChaCha8 generator seeded with the configured base seed, using one stream
//! per repetition (`set_stream(rep)`); Gaussians come from the ziggurat
//! `StandardNormal` and are drawn in a fixed row-major order. Repeated runs
//! with the same configuration are bit-identical within one build;
//! cross-platform runs are statistically equivalent.

use crate::criteria::{CriterionParams, Tradeoff};
use crate::error::{OedError, Result};
use crate::kernels::{make_cross_gram, make_gram, KernelSpec};
use crate::pool::PoolMatrix;
use crate::regression::{krr_fit, one_hot, ridge_fit, test_mse};
use crate::selection::{greedy_fast, greedy_primal, select_random, GreedyOptions, Subsample};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::io::Write;

/// One measured point of an experiment curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub method: String,
    pub n: usize,
    pub seed: u64,
    pub mse: f64,
}

/// Experiment output: one row per (method, design size, repetition).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

impl CurveTable {
    /// Serializes as CSV with the mandatory `method,n,seed,mse` header and LF
    /// line endings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"method,n,seed,mse\n")?;
        for row in &self.rows {
            writeln!(w, "{},{},{},{}", row.method, row.n, row.seed, row.mse)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("in-memory write cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// Median MSE over repetitions for one (method, n) cell.
    pub fn median_mse(&self, method: &str, n: usize) -> Option<f64> {
        let mut vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.n == n)
            .map(|r| r.mse)
            .collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(f64::total_cmp);
        let k = vals.len();
        Some(if k % 2 == 1 {
            vals[k / 2]
        } else {
            0.5 * (vals[k / 2 - 1] + vals[k / 2])
        })
    }
}

/// Configuration of the synthetic double-descent study.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleDescentConfig {
    pub d: usize,
    pub pool_size: usize,
    pub test_size: usize,
    /// Noise standard deviation σ.
    pub sigma: f64,
    /// Designs are grown one point at a time up to this size.
    pub max_n: usize,
    pub repetitions: u64,
    pub base_seed: u64,
    /// Tradeoff of the bias-aware arm (σ² unless overridden).
    pub t: f64,
    /// Index base of the covariance spectrum Σ_ii = exp(−2.5·i/d):
    /// 1 gives i ∈ {1..d} (Σ_11 = e^{−0.025}), 0 gives i ∈ {0..d−1}.
    pub sigma_index_base: u32,
}

impl Default for DoubleDescentConfig {
    fn default() -> Self {
        let sigma = 0.2;
        Self {
            d: 100,
            pool_size: 500,
            test_size: 100,
            sigma,
            max_n: 120,
            repetitions: 20,
            base_seed: 0,
            t: sigma * sigma,
            sigma_index_base: 1,
        }
    }
}

impl DoubleDescentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.pool_size == 0 || self.test_size == 0 || self.repetitions == 0 {
            return Err(OedError::InvalidInput("all sizes must be positive".into()));
        }
        if self.max_n == 0 || self.max_n > self.pool_size {
            return Err(OedError::InvalidInput(format!(
                "max design size {} must satisfy 1 ≤ n ≤ pool size {}",
                self.max_n, self.pool_size
            )));
        }
        if self.sigma < 0.0 || self.t < 0.0 {
            return Err(OedError::InvalidInput(
                "sigma and t must be nonnegative".into(),
            ));
        }
        if self.sigma_index_base > 1 {
            return Err(OedError::InvalidInput(
                "sigma index base must be 0 or 1".into(),
            ));
        }
        Ok(())
    }

    fn column_scales(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| {
                let idx = (j + self.sigma_index_base as usize) as f64;
                (-2.5 * idx / self.d as f64).exp().sqrt()
            })
            .collect()
    }
}

/// One repetition's data, regenerable deterministically for audits.
pub struct DoubleDescentInstance {
    pub pool: PoolMatrix,
    pub y_pool: DMatrix<f64>,
    pub test: DMatrix<f64>,
    pub y_test: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Seed handed to the random-design baseline of this repetition.
    pub design_seed: u64,
}

fn sample_gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, scales: &[f64]) -> DMatrix<f64> {
    let d = scales.len();
    let mut m = DMatrix::zeros(rows, d);
    for i in 0..rows {
        for j in 0..d {
            let g: f64 = rng.sample(StandardNormal);
            m[(i, j)] = scales[j] * g;
        }
    }
    m
}

/// Regenerates repetition `rep` of the double-descent study. Draw order:
/// w, pool rows, test rows, pool noise, test noise, design seed.
pub fn double_descent_instance(
    config: &DoubleDescentConfig,
    rep: u64,
) -> Result<DoubleDescentInstance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.base_seed);
    rng.set_stream(rep);
    let scales = config.column_scales();
    let unit = vec![1.0; config.d];
    let w = sample_gaussian_rows(&mut rng, 1, &unit).transpose(); // d×1
    let pool_x = sample_gaussian_rows(&mut rng, config.pool_size, &scales);
    let test = sample_gaussian_rows(&mut rng, config.test_size, &scales);
    let noise = vec![config.sigma];
    let eps_pool = sample_gaussian_rows(&mut rng, config.pool_size, &noise);
    let eps_test = sample_gaussian_rows(&mut rng, config.test_size, &noise);
    let y_pool = &pool_x * &w + eps_pool;
    let y_test = &test * &w + eps_test;
    let design_seed: u64 = rng.random();
    Ok(DoubleDescentInstance {
        pool: PoolMatrix::new(pool_x)?,
        y_pool,
        test,
        y_test,
        w,
        design_seed,
    })
}

/// Test MSE of the minimum-norm fit on the first `n` design points.
pub fn design_prefix_mse(
    instance: &DoubleDescentInstance,
    indices: &[usize],
    n: usize,
) -> Result<f64> {
    let s = &indices[..n];
    let x = instance.pool.select_rows(s);
    let y = DMatrix::from_fn(n, 1, |i, _| instance.y_pool[(s[i], 0)]);
    let model = ridge_fit(&x, &y, 0.0)?;
    test_mse(&model, &instance.test, &instance.y_test)
}

fn double_descent_rep(config: &DoubleDescentConfig, rep: u64) -> Result<Vec<CurveRow>> {
    let instance = double_descent_instance(config, rep)?;
    let m = config.pool_size;
    let random = select_random(m, config.max_n, instance.design_seed)?;
    let classical = greedy_primal(
        &instance.pool,
        config.max_n,
        &CriterionParams::variance_only(0.0),
        "classical",
    )?;
    let overparam = greedy_primal(
        &instance.pool,
        config.max_n,
        &CriterionParams::new(0.0, Tradeoff::Finite(config.t))?,
        "overparameterized",
    )?;
    let mut rows = Vec::with_capacity(3 * config.max_n);
    for design in [&random, &classical, &overparam] {
        for n in 1..=config.max_n {
            let mse = design_prefix_mse(&instance, &design.indices, n)?;
            rows.push(CurveRow {
                method: design.method.clone(),
                n,
                seed: rep,
                mse,
            });
        }
    }
    Ok(rows)
}

/// Runs the Appendix-style double-descent study: three incremental designs
/// (random, variance-only "classical", bias-aware "overparameterized") with
/// min-norm regression MSE recorded after every added point.
pub fn run_double_descent(config: &DoubleDescentConfig) -> Result<CurveTable> {
    config.validate()?;
    let per_rep: Vec<Result<Vec<CurveRow>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| double_descent_rep(config, rep))
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(CurveTable { rows })
}

/// Configuration of the kernel-regression design comparison.
#[derive(Debug, Clone)]
pub struct KernelDesignConfig {
    pub kernel: KernelSpec,
    pub params: Vec<CriterionParams>,
    /// Strictly increasing design sizes to report.
    pub sizes: Vec<usize>,
    pub subsample: Option<Subsample>,
}

impl KernelDesignConfig {
    pub fn validate(&self, pool_points: usize) -> Result<()> {
        if self.params.is_empty() || self.sizes.is_empty() {
            return Err(OedError::InvalidInput(
                "at least one parameter set and one design size required".into(),
            ));
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) {
            return Err(OedError::InvalidInput(
                "design sizes must be strictly increasing".into(),
            ));
        }
        let max = *self.sizes.last().unwrap();
        if max == 0 || max > pool_points {
            return Err(OedError::InvalidInput(format!(
                "largest design size {max} exceeds pool of {pool_points}"
            )));
        }
        Ok(())
    }
}

/// Method tag used in kernel-design curve rows.
pub fn kernel_design_method_tag(params: &CriterionParams) -> String {
    format!("greedy-l{}-t{}", params.lambda, params.t)
}

/// For each parameter set: one nested greedy design on the pool Gram, KRR
/// fits at the same λ, test MSE per requested size.
pub fn run_kernel_design(
    pool: &PoolMatrix,
    y_pool: &DMatrix<f64>,
    test_pool: &PoolMatrix,
    y_test: &DMatrix<f64>,
    config: &KernelDesignConfig,
) -> Result<CurveTable> {
    config.validate(pool.num_points())?;
    if y_pool.nrows() != pool.num_points() || y_test.nrows() != test_pool.num_points() {
        return Err(OedError::DimensionMismatch(
            "label rows must match pool rows".into(),
        ));
    }
    let gram = make_gram(pool, &config.kernel)?;
    let cross = make_cross_gram(test_pool, pool, &config.kernel)?;
    let max_n = *config.sizes.last().unwrap();
    let opts = GreedyOptions {
        subsample: config.subsample,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for params in &config.params {
        let design = greedy_fast(&gram, max_n, params, &opts)?;
        let tag = kernel_design_method_tag(params);
        for &n in &config.sizes {
            let s = &design.indices[..n];
            let kss = gram.submatrix(s);
            let ys = DMatrix::from_fn(n, y_pool.ncols(), |i, j| y_pool[(s[i], j)]);
            let model = krr_fit(&kss, &ys, params.lambda)?;
            let krows = DMatrix::from_fn(test_pool.num_points(), n, |i, j| cross[(i, s[j])]);
            let mse = test_mse(&model, &krows, y_test)?;
            rows.push(CurveRow {
                method: tag.clone(),
                n,
                seed: 0,
                mse,
            });
        }
    }
    Ok(CurveTable { rows })
}

/// A labeled dataset for the t-study: features plus integer class ids.
#[derive(Debug, Clone)]
pub struct TStudyDataset {
    pub name: String,
    pub features: PoolMatrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TStudyConfig {
    pub kernel: KernelSpec,
    pub lambdas: Vec<f64>,
    pub design_size: usize,
    /// Relative margin under which two errors count as a tie.
    pub tie_margin: f64,
}

/// Win/tie counts for one λ across all datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct TStudyRow {
    pub lambda: f64,
    pub wins_t0: usize,
    pub wins_tlambda: usize,
    pub ties: usize,
}

/// Tie rule: errors within `margin` relative difference (against the larger
/// error) count as the same.
pub fn is_tie(e0: f64, e1: f64, margin: f64) -> bool {
    let denom = e0.max(e1);
    denom == 0.0 || (e0 - e1).abs() <= margin * denom
}

fn classification_error(pred: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut wrong = 0usize;
    for (r, &label) in labels.iter().enumerate() {
        let row = pred.row(r);
        let mut best = 0usize;
        for c in 1..pred.ncols() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best != label {
            wrong += 1;
        }
    }
    wrong as f64 / labels.len().max(1) as f64
}

fn t_study_arm_error(
    dataset: &TStudyDataset,
    gram: &crate::kernels::GramMatrix,
    classes: usize,
    params: &CriterionParams,
    n: usize,
) -> Result<f64> {
    let design = greedy_fast(gram, n, params, &GreedyOptions::default())?;
    let s = &design.indices;
    let kss = gram.submatrix(s);
    let y_s_labels: Vec<usize> = s.iter().map(|&i| dataset.labels[i]).collect();
    let ys = one_hot(&y_s_labels, classes)?;
    let model = krr_fit(&kss, &ys, params.lambda)?;
    let holdout: Vec<usize> = (0..dataset.features.num_points())
        .filter(|i| !s.contains(i))
        .collect();
    let krows = DMatrix::from_fn(holdout.len(), s.len(), |i, j| {
        gram.matrix()[(holdout[i], s[j])]
    });
    let pred = model.predict(&krows)?;
    let holdout_labels: Vec<usize> = holdout.iter().map(|&i| dataset.labels[i]).collect();
    Ok(classification_error(&pred, &holdout_labels))
}

/// Compares designs from ψ̄_{λ,0} vs ψ̄_{λ,λ} by holdout classification
/// error. Datasets smaller than n+1 points are skipped; their names come
/// back as warnings.
pub fn run_t_study(
    datasets: &[TStudyDataset],
    config: &TStudyConfig,
) -> Result<(Vec<TStudyRow>, Vec<String>)> {
    if config.lambdas.is_empty() {
        return Err(OedError::InvalidInput(
            "at least one lambda required".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.tie_margin) {
        return Err(OedError::InvalidInput(
            "tie margin must be in [0, 1)".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut rows: Vec<TStudyRow> = config
        .lambdas
        .iter()
        .map(|&lambda| TStudyRow {
            lambda,
            wins_t0: 0,
            wins_tlambda: 0,
            ties: 0,
        })
        .collect();
    for dataset in datasets {
        if dataset.labels.len() != dataset.features.num_points() {
            return Err(OedError::DimensionMismatch(format!(
                "dataset '{}': {} labels for {} points",
                dataset.name,
                dataset.labels.len(),
                dataset.features.num_points()
            )));
        }
        if dataset.features.num_points() < config.design_size + 1 {
            warnings.push(format!(
                "skipping '{}': {} points < design size {} + 1",
                dataset.name,
                dataset.features.num_points(),
                config.design_size
            ));
            continue;
        }
        let classes = dataset.labels.iter().max().map_or(0, |&c| c + 1);
        let gram = make_gram(&dataset.features, &config.kernel)?;
        for row in rows.iter_mut() {
            let lambda = row.lambda;
            let p0 = CriterionParams::new(lambda, Tradeoff::Finite(0.0))?;
            let pl = CriterionParams::new(lambda, Tradeoff::Finite(lambda))?;
            let e0 = t_study_arm_error(dataset, &gram, classes, &p0, config.design_size)?;
            let el = t_study_arm_error(dataset, &gram, classes, &pl, config.design_size)?;
            if is_tie(e0, el, config.tie_margin) {
                row.ties += 1;
            } else if e0 < el {
                row.wins_t0 += 1;
            } else {
                row.wins_tlambda += 1;
            }
        }
    }
    Ok((rows, warnings))
}

//! Design criteria for overparameterized regression.
//!
//! * `expected_risk` — exact bias/variance decomposition of the ridge (or
//!   minimum-norm) estimator for a fixed design.
//! * `psi_bar` — the empirical pool criterion ψ̄_{λ,t} evaluated in feature
//!   space.
//! * `j_criterion` — the kernelized objective J_{λ,t}, equal to ψ̄ − Tr(K)
//!   for the linear kernel.

use crate::error::{OedError, Result};
use crate::kernels::GramMatrix;
use crate::linalg;
use crate::pool::PoolMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Bias-variance tradeoff weight `t`. The infinite value selects the
/// variance-only criterion; by convention the `t` multiplier is then dropped
/// so that argmin semantics are preserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tradeoff {
    Finite(f64),
    Infinite,
}

impl Tradeoff {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Tradeoff::Infinite)
    }

    pub fn finite_value(&self) -> Option<f64> {
        match *self {
            Tradeoff::Finite(t) => Some(t),
            Tradeoff::Infinite => None,
        }
    }
}

impl Serialize for Tradeoff {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Tradeoff::Finite(t) => s.serialize_f64(t),
            Tradeoff::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Tradeoff {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => Ok(Tradeoff::Finite(
                n.as_f64().ok_or_else(|| D::Error::custom("bad number"))?,
            )),
            serde_json::Value::String(s) if s == "inf" => Ok(Tradeoff::Infinite),
            other => Err(D::Error::custom(format!("invalid tradeoff value: {other}"))),
        }
    }
}

impl std::str::FromStr for Tradeoff {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Tradeoff::Infinite);
        }
        let v: f64 = s.parse().map_err(|_| format!("invalid t value '{s}'"))?;
        if v < 0.0 {
            return Err(format!("t must be nonnegative, got {v}"));
        }
        Ok(Tradeoff::Finite(v))
    }
}

impl std::fmt::Display for Tradeoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Tradeoff::Finite(t) => write!(f, "{t}"),
            Tradeoff::Infinite => write!(f, "inf"),
        }
    }
}

/// Criterion parameters (λ, t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionParams {
    pub lambda: f64,
    pub t: Tradeoff,
}

impl CriterionParams {
    pub fn new(lambda: f64, t: Tradeoff) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(OedError::InvalidInput(format!(
                "lambda must be a finite nonnegative real, got {lambda}"
            )));
        }
        if let Tradeoff::Finite(t) = t {
            if t < 0.0 || !t.is_finite() {
                return Err(OedError::InvalidInput(format!(
                    "t must be nonnegative, got {t}"
                )));
            }
        }
        Ok(Self { lambda, t })
    }

    pub fn bias_only(lambda: f64) -> Self {
        Self {
            lambda,
            t: Tradeoff::Finite(0.0),
        }
    }

    pub fn variance_only(lambda: f64) -> Self {
        Self {
            lambda,
            t: Tradeoff::Infinite,
        }
    }
}

/// Exact risk decomposition of the regularized estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
}

/// `M_λ⁺ M` and `M_λ⁺² M` for `M = XᵀX`: inverse-based for λ > 0,
/// pseudoinverse-based (rank-revealing) for λ = 0.
fn soft_projection_pair(m: &DMatrix<f64>, lambda: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = m.nrows();
    let mdag = if lambda > 0.0 {
        let mut ml = m.clone();
        for i in 0..d {
            ml[(i, i)] += lambda;
        }
        linalg::spd_inverse(&ml)
    } else {
        linalg::sym_pinv(m).0
    };
    let p = &mdag * m; // M_λ⁺ M
    let p2 = &mdag * &p; // M_λ⁺² M
    (p, p2)
}

/// Expected excess risk of the ridge estimator fit on design `x`, decomposed
/// into bias `‖C^{1/2}(I − M_λ⁺M)w‖²` and variance `σ²Tr(C M_λ⁺² M)`.
/// Valid for both `n < d` and `n ≥ d`; `n = 0` is allowed (empty design).
pub fn expected_risk(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    sigma2: f64,
    c: &DMatrix<f64>,
    lambda: f64,
) -> Result<RiskDecomposition> {
    let d = w.len();
    if x.ncols() != d && x.nrows() != 0 {
        return Err(OedError::DimensionMismatch(format!(
            "design has {} columns, w has length {}",
            x.ncols(),
            d
        )));
    }
    if c.nrows() != d || c.ncols() != d {
        return Err(OedError::DimensionMismatch(format!(
            "C is {}x{}, expected {d}x{d}",
            c.nrows(),
            c.ncols()
        )));
    }
    if sigma2 < 0.0 {
        return Err(OedError::InvalidInput("sigma2 must be nonnegative".into()));
    }
    let max_diag = c.diagonal().iter().fold(0.0f64, |a, &v| a.max(v));
    let psd_tol = crate::kernels::PSD_TOL_FACTOR * max_diag.max(f64::MIN_POSITIVE);
    let c_half = linalg::sym_sqrt(c, psd_tol).map_err(|min_eig| OedError::NotPsd {
        min_eig,
        tol: psd_tol,
    })?;

    let m = if x.nrows() == 0 {
        DMatrix::zeros(d, d)
    } else {
        x.transpose() * x
    };
    let (p, p2) = soft_projection_pair(&m, lambda);
    let residual = w - &p * w;
    let bias = (&c_half * residual).norm_squared();
    let variance = sigma2 * linalg::trace_of_product_t(c, &p2.transpose());
    Ok(RiskDecomposition {
        bias,
        variance,
        total: bias + variance,
    })
}

/// Bias and variance factors of ψ̄ in feature space:
/// `(‖V(I − M_λ⁺M)‖_F², Tr(V M_λ⁺² M Vᵀ))` for `M = V_SᵀV_S`.
pub fn psi_bar_parts(pool: &PoolMatrix, s: &[usize], lambda: f64) -> Result<(f64, f64)> {
    let m_pts = pool.num_points();
    if let Some(&bad) = s.iter().find(|&&i| i >= m_pts) {
        return Err(OedError::InvalidInput(format!(
            "selected index {bad} out of range for pool of {m_pts} points"
        )));
    }
    let v = pool.matrix();
    let d = pool.dim();
    let vs = pool.select_rows(s);
    let m = if s.is_empty() {
        DMatrix::zeros(d, d)
    } else {
        vs.transpose() * &vs
    };
    let (p, p2) = soft_projection_pair(&m, lambda);
    let bias = linalg::fro_norm_sq(&(v - v * &p));
    let t_mat = v * &p2;
    let variance = linalg::trace_of_product_t(&t_mat, v);
    Ok((bias, variance))
}

/// Empirical pool criterion ψ̄_{λ,t}. For `t = +∞` returns the variance
/// factor alone (the `t` multiplier is dropped).
pub fn psi_bar(pool: &PoolMatrix, s: &[usize], params: &CriterionParams) -> Result<f64> {
    let (bias, variance) = psi_bar_parts(pool, s, params.lambda)?;
    Ok(match params.t {
        Tradeoff::Finite(t) => bias + t * variance,
        Tradeoff::Infinite => variance,
    })
}

/// Kernelized criterion J_{λ,t}(S). `J(∅) = 0` by convention, so that
/// `ψ̄(∅) = Tr(K)` holds through the Gram/feature identity.
///
/// For `t = +∞` returns `Tr(K_{:,S}(K_SS+λI)⁻²K_{:,S}ᵀ)`, matching
/// `psi_bar`'s variance-only convention.
pub fn j_criterion(k: &GramMatrix, s: &[usize], params: &CriterionParams) -> Result<f64> {
    if s.is_empty() {
        return Ok(match params.t {
            Tradeoff::Infinite => 0.0,
            Tradeoff::Finite(_) => 0.0,
        });
    }
    let m_pts = k.size();
    if let Some(&bad) = s.iter().find(|&&i| i >= m_pts) {
        return Err(OedError::InvalidInput(format!(
            "selected index {bad} out of range for gram of size {m_pts}"
        )));
    }
    let kss = k.submatrix(s);
    let kcols = k.columns(s);
    let lambda = params.lambda;
    let j = s.len();

    let g = if lambda > 0.0 {
        let mut shifted = kss.clone();
        for i in 0..j {
            shifted[(i, i)] += lambda;
        }
        linalg::spd_inverse(&shifted)
    } else {
        let (pinv, rank) = linalg::sym_pinv(&kss);
        if rank < j {
            // the most recently appended index is reported; in greedy use this
            // is the candidate that made the subset degenerate
            return Err(OedError::DegenerateSubset { index: s[j - 1] });
        }
        pinv
    };

    let inner = match params.t {
        Tradeoff::Infinite => &g * &g,
        Tradeoff::Finite(t) => {
            let mut core = &kss * &g;
            for i in 0..j {
                core[(i, i)] -= 2.0;
            }
            &g * core + (&g * &g) * t
        }
    };
    // Tr(K_:S Inner K_:Sᵀ) = <K_:S Inner, K_:S>
    let left = &kcols * inner;
    Ok(linalg::trace_of_product_t(&left, &kcols))
}

//! Pool-based optimal experimental design for overparameterized regression.
//!
//! The toolkit selects design points from a fixed candidate pool by greedily
//! minimizing a kernelized bias-variance criterion, with exact risk evaluation
//! and an experiment harness for double-descent studies.

pub use nalgebra;

pub mod criteria;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod pool;
pub mod regression;
pub mod selection;

pub use criteria::{
    expected_risk, j_criterion, psi_bar, psi_bar_parts, CriterionParams, RiskDecomposition,
    Tradeoff,
};
pub use error::{OedError, Result};
pub use experiments::{
    run_double_descent, run_kernel_design, run_t_study, CurveTable, DoubleDescentConfig,
    KernelDesignConfig, TStudyConfig, TStudyDataset,
};
pub use kernels::{make_cross_gram, make_gram, GramMatrix, KernelSpec};
pub use pool::PoolMatrix;
pub use regression::{krr_fit, krr_predict, ridge_fit, test_mse, FitModel};
pub use selection::{
    greedy_fast, greedy_naive, greedy_primal, select_k_centers, select_k_centers_gram,
    select_random, select_variance_only, uncertainty_scores, DesignResult, GreedyOptions,
};

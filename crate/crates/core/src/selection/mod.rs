//! Design selection: greedy minimization of the kernelized criterion plus
//! baseline strategies.

mod baselines;
mod greedy;
mod primal;

pub use baselines::{
    select_k_centers, select_k_centers_gram, select_random, select_variance_only,
    uncertainty_scores,
};
pub use greedy::{greedy_fast, greedy_naive, DesignState, SCHUR_SKIP_FACTOR};
pub use primal::greedy_primal;

use crate::criteria::Tradeoff;
use serde::{Deserialize, Serialize};

/// Default interval (in commits) between from-scratch cache refreshes of the
/// incremental greedy state, bounding float drift.
pub const REFRESH_INTERVAL: usize = 32;

/// Per-step candidate subsampling: each greedy step scores a random subset of
/// this size drawn from the unselected pool, seeded for determinism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subsample {
    pub size: usize,
    pub seed: u64,
}

/// Options shared by the greedy selectors.
#[derive(Debug, Clone)]
pub struct GreedyOptions {
    /// Restrict every step's scan to this index subset (None = whole pool).
    pub candidates: Option<Vec<usize>>,
    /// Per-step random candidate subsampling.
    pub subsample: Option<Subsample>,
    /// Commits between from-scratch refreshes of the incremental caches.
    pub refresh_every: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self {
            candidates: None,
            subsample: None,
            refresh_every: REFRESH_INTERVAL,
        }
    }
}

/// An ordered design with its per-step criterion values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignResult {
    pub method: String,
    pub lambda: f64,
    pub t: Tradeoff,
    pub indices: Vec<usize>,
    /// Criterion value after each committed point (method-dependent for the
    /// baselines; see each selector).
    pub scores: Vec<f64>,
    pub seed: Option<u64>,
    /// SHA-256 checksum of the Gram (or pool) matrix the design was built on.
    pub pool_checksum: String,
    #[serde(skip)]
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub step_times: Vec<f64>,
}

impl DesignResult {
    /// Structural sanity: indices distinct and in range, one score per index.
    pub fn validate(&self, m: usize) -> crate::error::Result<()> {
        use crate::error::OedError;
        if self.scores.len() != self.indices.len() {
            return Err(OedError::InvalidInput(format!(
                "{} scores for {} indices",
                self.scores.len(),
                self.indices.len()
            )));
        }
        let mut seen = vec![false; m];
        for &i in &self.indices {
            if i >= m {
                return Err(OedError::InvalidInput(format!(
                    "design index {i} out of range for pool of {m}"
                )));
            }
            if seen[i] {
                return Err(OedError::InvalidInput(format!(
                    "duplicate design index {i}"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

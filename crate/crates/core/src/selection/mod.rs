//! Training-subset selection strategies.
//!
//! | strategy           | needs labels | objective                                  |
//! |--------------------|--------------|--------------------------------------------|
//! | `random`           | no           | none                                       |
//! | `greedy`           | val          | sum of per-sample `1 - AUROC`              |
//! | `evolutionary`     | val          | score-matrix fitness                       |
//! | `gmm_coreset`      | no           | rows nearest the GMM component means       |
//! | `minimax_coverage` | no           | k-center coverage radius                   |

mod coreset;
mod evolutionary;
mod greedy;
mod minimax;
mod random;
mod score_matrix;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use coreset::select_gmm_coreset;
pub use evolutionary::{
    fitness, fitness_with, run_evolutionary, select_evolutionary, EvoConfig, EvoOutcome, FitnessMode,
};
pub use greedy::{per_sample_errors, select_greedy};
pub use minimax::{coverage_radius, select_minimax_coverage};
pub use random::select_random;
pub use score_matrix::{compute_score_matrix, ScoreMatrix};

use crate::covariance::CovarianceType;
use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Greedy,
    Evolutionary,
    GmmCoreset,
    MinimaxCoverage,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Greedy,
        Strategy::Evolutionary,
        Strategy::GmmCoreset,
        Strategy::MinimaxCoverage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Greedy => "greedy",
            Strategy::Evolutionary => "evolutionary",
            Strategy::GmmCoreset => "gmm_coreset",
            Strategy::MinimaxCoverage => "minimax_coverage",
        }
    }

    /// Whether the strategy consults validation labels.
    pub fn is_supervised(self) -> bool {
        matches!(self, Strategy::Greedy | Strategy::Evolutionary)
    }

    pub(crate) fn stream_tag(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strategy-specific parameters recorded with a selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SelectionParams {
    Random {},
    Greedy {},
    Evolutionary {
        population: usize,
        generations: usize,
        crossover_prob: f64,
        fitness: FitnessMode,
    },
    GmmCoreset {
        components: usize,
        covariance: CovarianceType,
        restarts: usize,
        max_iters: usize,
        tol: f64,
        cov_floor: f64,
        final_log_likelihood: f64,
        converged: bool,
    },
    MinimaxCoverage {
        start: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetSelection {
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    pub indices: Vec<usize>,
    pub achieved_objective: Option<f64>,
    pub params: SelectionParams,
}

impl SubsetSelection {
    pub(crate) fn new(
        strategy: Strategy,
        seed: u64,
        indices: Vec<usize>,
        achieved_objective: Option<f64>,
        params: SelectionParams,
    ) -> Self {
        debug_assert!(distinct(&indices), "selection indices must be distinct");
        Self {
            strategy,
            seed,
            m: indices.len(),
            indices,
            achieved_objective,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn distinct(indices: &[usize]) -> bool {
    let mut v = indices.to_vec();
    v.sort_unstable();
    v.windows(2).all(|w| w[0] != w[1])
}

pub(crate) fn check_size(m: usize, n: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Config("subset size M must be >= 1".into()));
    }
    if m > n {
        return Err(Error::Config(format!(
            "subset size M = {m} exceeds the {n} available training samples"
        )));
    }
    Ok(())
}

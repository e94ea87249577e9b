//! Subset-size sweeps: every strategy at every size, evaluated on the test split.
//!
//! Supervised strategies select on the validation split through the
//! single-sample score matrix; unsupervised ones look only at training
//! embeddings. Every cell derives its generator from the sweep seed and the
//! cell coordinates, so the report does not depend on scheduling.

use std::io::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covariance::CovarianceType;
use crate::dataset::{encode_embeddings, DatasetSplit};
use crate::error::{Error, Result};
use crate::gmm::GmmConfig;
use crate::rng;
use crate::scorers::ScorerSpec;
use crate::selection::{
    compute_score_matrix, per_sample_errors, select_evolutionary, select_gmm_coreset, select_greedy,
    select_minimax_coverage, select_random, EvoConfig, FitnessMode, ScoreMatrix, Strategy,
    SubsetSelection,
};

use super::evaluate_subset;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvoSettings {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub fitness: FitnessMode,
}

impl Default for EvoSettings {
    fn default() -> Self {
        let d = EvoConfig::default();
        Self {
            population: d.population,
            generations: d.generations,
            crossover_prob: d.crossover_prob,
            fitness: d.fitness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmSettings {
    /// `None` picks full covariance up to 64 dims and diagonal above.
    pub covariance: Option<CovarianceType>,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub cov_floor: f64,
}

impl Default for GmmSettings {
    fn default() -> Self {
        let d = GmmConfig::new(1, 1, 0);
        Self {
            covariance: None,
            restarts: d.restarts,
            max_iters: d.max_iters,
            tol: d.tol,
            cov_floor: d.cov_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub subset_sizes: Vec<usize>,
    pub random_repeats: usize,
    pub strategies: Vec<Strategy>,
    pub scorer: ScorerSpec,
    pub seed: u64,
    pub evolutionary: EvoSettings,
    pub gmm: GmmSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            subset_sizes: vec![1, 5, 10, 25],
            random_repeats: 10,
            strategies: Strategy::ALL.to_vec(),
            scorer: ScorerSpec::default(),
            seed: 0,
            evolutionary: EvoSettings::default(),
            gmm: GmmSettings::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.subset_sizes.is_empty() {
            return Err(Error::Config("sweep needs at least one subset size".into()));
        }
        if let Some(&bad) = self.subset_sizes.iter().find(|&&s| s == 0 || s > train_len) {
            return Err(Error::Config(format!(
                "subset size {bad} is outside 1..={train_len} (training set size)"
            )));
        }
        if self.random_repeats == 0 {
            return Err(Error::Config("random_repeats must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("sweep needs at least one strategy".into()));
        }
        self.scorer.validate()?;
        self.evo_config(0).validate()
    }

    fn evo_config(&self, seed: u64) -> EvoConfig {
        EvoConfig {
            population: self.evolutionary.population,
            generations: self.evolutionary.generations,
            crossover_prob: self.evolutionary.crossover_prob,
            seed,
            fitness: self.evolutionary.fitness,
        }
    }

    fn gmm_config(&self, components: usize, dim: usize, seed: u64) -> GmmConfig {
        GmmConfig {
            components,
            covariance: self
                .gmm
                .covariance
                .unwrap_or_else(|| CovarianceType::default_for_dim(dim)),
            max_iters: self.gmm.max_iters,
            tol: self.gmm.tol,
            restarts: self.gmm.restarts,
            cov_floor: self.gmm.cov_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub auroc: f64,
    pub achieved_objective: Option<f64>,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub strategy: Strategy,
    pub size: usize,
    pub mean_auroc: f64,
    /// Population standard deviation over repeats; random strategy only.
    pub std_auroc: Option<f64>,
    pub runs: Vec<RunRecord>,
}

impl SweepCell {
    pub fn aurocs(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.auroc).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullTraining {
    pub size: usize,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub dim: usize,
    pub config: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub metadata: SweepMetadata,
    pub full_training: FullTraining,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, strategy: Strategy, size: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.strategy == strategy && c.size == size)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    /// One row per (strategy, size) cell followed by a `full_training` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Validation(format!("cannot write CSV: {e}"));
        w.write_record(["strategy", "size", "runs", "mean_auroc", "std_auroc"])
            .map_err(csv_err)?;
        for c in &self.cells {
            w.write_record([
                c.strategy.as_str().to_owned(),
                c.size.to_string(),
                c.runs.len().to_string(),
                c.mean_auroc.to_string(),
                c.std_auroc.map(|s| s.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.write_record([
            "full_training".to_owned(),
            self.full_training.size.to_string(),
            "1".to_owned(),
            self.full_training.auroc.to_string(),
            String::new(),
        ])
        .map_err(csv_err)?;
        let mut bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        bytes.flush().ok();
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

/// SHA-256 over the EMB1 encodings of train, val and test, in that order.
pub fn dataset_fingerprint(split: &DatasetSplit) -> Result<String> {
    let mut h = Sha256::new();
    for part in [&split.train, &split.val, &split.test] {
        h.update(encode_embeddings(part)?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn run_sweep(split: &DatasetSplit, cfg: &SweepConfig) -> Result<SweepReport> {
    let train = &split.train;
    cfg.validate(train.len())?;

    let needs_matrix = cfg.strategies.iter().any(|s| s.is_supervised());
    let matrix = if needs_matrix {
        Some(compute_score_matrix(train, &split.val, cfg.scorer)?)
    } else {
        None
    };
    let errors = matrix.as_ref().map(per_sample_errors);

    let jobs: Vec<(Strategy, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| cfg.subset_sizes.iter().map(move |&m| (s, m)))
        .collect();

    let ctx = CellContext {
        split,
        cfg,
        matrix: matrix.as_ref(),
        errors: errors.as_deref(),
    };
    let cells = jobs
        .par_iter()
        .map(|&(strategy, size)| ctx.run_cell(strategy, size))
        .collect::<Result<Vec<_>>>()?;

    let all: Vec<usize> = (0..train.len()).collect();
    let full = FullTraining {
        size: train.len(),
        auroc: evaluate_subset(train, &all, &split.test, cfg.scorer)?,
    };

    Ok(SweepReport {
        metadata: SweepMetadata {
            seed: cfg.seed,
            dataset_fingerprint: dataset_fingerprint(split)?,
            train_size: train.len(),
            val_size: split.val.len(),
            test_size: split.test.len(),
            dim: train.dim(),
            config: cfg.clone(),
        },
        full_training: full,
        cells,
    })
}

struct CellContext<'a> {
    split: &'a DatasetSplit,
    cfg: &'a SweepConfig,
    matrix: Option<&'a ScoreMatrix>,
    errors: Option<&'a [f64]>,
}

impl CellContext<'_> {
    fn cell_seed(&self, strategy: Strategy, size: usize, repeat: usize) -> u64 {
        rng::derive_seed(
            self.cfg.seed,
            &[rng::tag::SWEEP, strategy.stream_tag(), size as u64, repeat as u64],
        )
    }

    fn select(&self, strategy: Strategy, size: usize, seed: u64) -> Result<SubsetSelection> {
        let train = &self.split.train;
        match strategy {
            Strategy::Random => select_random(train.len(), size, seed),
            Strategy::Greedy => {
                let mut s = select_greedy(self.errors.expect("matrix computed"), size)?;
                s.seed = seed;
                Ok(s)
            }
            Strategy::Evolutionary => select_evolutionary(
                self.matrix.expect("matrix computed"),
                size,
                &self.cfg.evo_config(seed),
            ),
            Strategy::GmmCoreset => {
                select_gmm_coreset(train, size, &self.cfg.gmm_config(size, train.dim(), seed))
            }
            Strategy::MinimaxCoverage => select_minimax_coverage(train, size, seed),
        }
    }

    fn run_cell(&self, strategy: Strategy, size: usize) -> Result<SweepCell> {
        let repeats = if strategy == Strategy::Random {
            self.cfg.random_repeats
        } else {
            1
        };
        let runs = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let seed = self.cell_seed(strategy, size, r);
                let sel = self.select(strategy, size, seed)?;
                let auroc = evaluate_subset(&self.split.train, &sel.indices, &self.split.test, self.cfg.scorer)?;
                Ok(RunRecord {
                    seed,
                    auroc,
                    achieved_objective: sel.achieved_objective,
                    indices: sel.indices,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let n = runs.len() as f64;
        let mean = runs.iter().map(|r| r.auroc).sum::<f64>() / n;
        let std_auroc = (strategy == Strategy::Random && runs.len() > 1).then(|| {
            (runs.iter().map(|r| (r.auroc - mean).powi(2)).sum::<f64>() / n).sqrt()
        });
        Ok(SweepCell {
            strategy,
            size,
            mean_auroc: mean,
            std_auroc,
            runs,
        })
    }
}

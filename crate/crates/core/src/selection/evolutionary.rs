//! Evolutionary subset search over a single-sample score matrix.
//!
//! Individuals are sorted index vectors of length `M`. Each generation keeps
//! the fittest half unchanged and adds one modified copy per survivor, made by
//! crossover (union of two parents, uniformly subsampled back to `M`) or by
//! mutation (one member swapped for a non-member).

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

use super::{check_size, ScoreMatrix, SelectionParams, Strategy, SubsetSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessMode {
    /// `Σ_k max_{i ∈ subset} y_k · s(i, k)`.
    #[default]
    Literal,
    /// `Σ_k y_k · min_{i ∈ subset} s(i, k)`: score each column by its nearest prototype.
    NearestPrototype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvoConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub seed: u64,
    #[serde(default)]
    pub fitness: FitnessMode,
}

impl Default for EvoConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            generations: 500,
            crossover_prob: 0.5,
            seed: 0,
            fitness: FitnessMode::Literal,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population must be an even number >= 2, got {}",
                self.population
            )));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config(format!(
                "crossover_prob must lie in [0,1], got {}",
                self.crossover_prob
            )));
        }
        Ok(())
    }
}

/// Literal score-matrix fitness of a subset.
pub fn fitness(subset: &[usize], scores: &ScoreMatrix) -> Result<f64> {
    fitness_with(subset, scores, FitnessMode::Literal)
}

pub fn fitness_with(subset: &[usize], scores: &ScoreMatrix, mode: FitnessMode) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Validation("fitness of an empty subset is undefined".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= scores.train_len()) {
        return Err(Error::Validation(format!(
            "subset index {bad} out of range for {} training rows",
            scores.train_len()
        )));
    }
    let mut seen = subset.to_vec();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("subset indices must be distinct".into()));
    }
    Ok(eval_fitness(subset, scores, mode))
}

fn eval_fitness(subset: &[usize], scores: &ScoreMatrix, mode: FitnessMode) -> f64 {
    let labels = scores.val_labels();
    let mut total = 0.0;
    for (k, &y) in labels.iter().enumerate() {
        let y = f64::from(y);
        let term = match mode {
            FitnessMode::Literal => subset
                .iter()
                .map(|&i| y * scores.get(i, k))
                .fold(f64::NEG_INFINITY, f64::max),
            FitnessMode::NearestPrototype => {
                y * subset
                    .iter()
                    .map(|&i| scores.get(i, k))
                    .fold(f64::INFINITY, f64::min)
            }
        };
        total += term;
    }
    total
}

#[derive(Debug, Clone)]
pub struct EvoOutcome {
    pub selection: SubsetSelection,
    /// Best-ever fitness after each generation's evaluation, plus one entry for
    /// the final population.
    pub best_trace: Vec<f64>,
    /// Fittest individual of the initial random population.
    pub initial_best: f64,
}

pub fn select_evolutionary(scores: &ScoreMatrix, m: usize, cfg: &EvoConfig) -> Result<SubsetSelection> {
    Ok(run_evolutionary(scores, m, cfg)?.selection)
}

pub fn run_evolutionary(scores: &ScoreMatrix, m: usize, cfg: &EvoConfig) -> Result<EvoOutcome> {
    cfg.validate()?;
    let n = scores.train_len();
    check_size(m, n)?;
    let params = SelectionParams::Evolutionary {
        population: cfg.population,
        generations: cfg.generations,
        crossover_prob: cfg.crossover_prob,
        fitness: cfg.fitness,
    };

    if m == n {
        let all: Vec<usize> = (0..n).collect();
        let f = eval_fitness(&all, scores, cfg.fitness);
        return Ok(EvoOutcome {
            selection: SubsetSelection::new(Strategy::Evolutionary, cfg.seed, all, Some(f), params),
            best_trace: vec![f],
            initial_best: f,
        });
    }

    let mut rng = rng::derive(cfg.seed, &[rng::tag::EVOLUTION]);
    let mut population: Vec<Vec<usize>> = (0..cfg.population)
        .map(|_| {
            let mut ind = sample(&mut rng, n, m).into_vec();
            ind.sort_unstable();
            ind
        })
        .collect();

    let evaluate = |pop: &[Vec<usize>]| -> Vec<f64> {
        pop.par_iter()
            .map(|ind| eval_fitness(ind, scores, cfg.fitness))
            .collect()
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut trace = Vec::with_capacity(cfg.generations + 1);
    let mut initial_best = f64::NEG_INFINITY;
    let half = cfg.population / 2;

    for generation in 0..=cfg.generations {
        let fits = evaluate(&population);
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| rank(fits[a], &population[a], fits[b], &population[b]));

        let top = order[0];
        if generation == 0 {
            initial_best = fits[top];
        }
        let improves = match &best {
            None => true,
            Some((bf, bi)) => rank(fits[top], &population[top], *bf, bi) == Ordering::Less,
        };
        if improves {
            best = Some((fits[top], population[top].clone()));
        }
        trace.push(best.as_ref().expect("set above").0);

        if generation == cfg.generations {
            break;
        }

        let survivors: Vec<Vec<usize>> = order[..half].iter().map(|&i| population[i].clone()).collect();
        let mut next = survivors.clone();
        for (s, parent) in survivors.iter().enumerate() {
            let child = if half >= 2 && rng.random::<f64>() < cfg.crossover_prob {
                let mut other = rng.random_range(0..half - 1);
                if other >= s {
                    other += 1;
                }
                crossover(parent, &survivors[other], m, &mut rng)
            } else {
                mutate(parent, n, &mut rng)
            };
            next.push(child);
        }
        population = next;
    }

    let (f, indices) = best.expect("at least one generation evaluated");
    Ok(EvoOutcome {
        selection: SubsetSelection::new(Strategy::Evolutionary, cfg.seed, indices, Some(f), params),
        best_trace: trace,
        initial_best,
    })
}

/// Higher fitness first; equal fitness broken by lexicographically smaller individual.
fn rank(fa: f64, a: &[usize], fb: f64, b: &[usize]) -> Ordering {
    fb.total_cmp(&fa).then_with(|| a.cmp(b))
}

fn crossover(a: &[usize], b: &[usize], m: usize, rng: &mut Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = a.iter().chain(b).copied().collect();
    pool.sort_unstable();
    pool.dedup();
    let mut child: Vec<usize> = sample(rng, pool.len(), m).into_iter().map(|i| pool[i]).collect();
    child.sort_unstable();
    child
}

/// Replaces one uniformly chosen member with a uniformly chosen non-member.
fn mutate(ind: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    let m = ind.len();
    let slot = rng.random_range(0..m);
    // r-th non-member: walk the sorted members, skipping past each one at or below the candidate
    let mut candidate = rng.random_range(0..n - m);
    for &member in ind {
        if member <= candidate {
            candidate += 1;
        }
    }
    let mut child = ind.to_vec();
    child[slot] = candidate;
    child.sort_unstable();
    child
}

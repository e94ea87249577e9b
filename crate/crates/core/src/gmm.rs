//! Gaussian mixture models fitted by expectation–maximisation.
//!
//! Each restart starts from k-means++ seeds, runs EM with log-space
//! responsibilities, and stops once the relative log-likelihood improvement
//! falls below `tol`. The restart with the highest final log-likelihood wins.

use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{weighted_covariance, Covariance, CovarianceType};
use crate::error::{Error, Result};
use crate::matrix::{squared_l2, RowMatrix};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub components: usize,
    pub covariance: CovarianceType,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub cov_floor: f64,
    pub seed: u64,
}

impl GmmConfig {
    /// Defaults with the covariance structure chosen from the data dimension.
    pub fn new(components: usize, dim: usize, seed: u64) -> Self {
        Self {
            components,
            covariance: CovarianceType::default_for_dim(dim),
            max_iters: 200,
            tol: 1e-6,
            restarts: 5,
            cov_floor: 1e-6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("GMM needs at least one component".into()));
        }
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::Config("GMM restarts and max_iters must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.cov_floor.is_nan() || self.cov_floor <= 0.0 {
            return Err(Error::Config("GMM tol and cov_floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    /// `M x D`, one component mean per row.
    pub means: RowMatrix,
    pub covariances: Vec<Covariance>,
    pub final_log_likelihood: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// Index of the winning restart.
    pub best_restart: usize,
    /// Per restart, the log-likelihood evaluated before each M-step and after the last.
    pub log_likelihood_traces: Vec<Vec<f64>>,
    /// Empty-component rescues performed by the winning restart.
    pub rescues: usize,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// `log(w_j) + log N(x; μ_j, Σ_j)` for each component.
    fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        log_joint(&self.weights, &self.means, &self.covariances, x, out)
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Validation(format!(
                "vector has {} dims, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let mut lj = vec![0.0; self.components()];
        self.log_joint(x, &mut lj);
        let lse = log_sum_exp(&lj);
        Ok(lj.iter().map(|v| (v - lse).exp()).collect())
    }

    /// Log-density of the mixture at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut lj = vec![0.0; self.components()];
        self.log_joint(x, &mut lj);
        log_sum_exp(&lj)
    }

    /// Indices of components ordered by descending weight, ties by index.
    pub fn components_by_weight(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.components()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        order
    }
}

/// Posterior component probabilities for `x`.
pub fn responsibilities(model: &GmmModel, x: &[f64]) -> Result<Vec<f64>> {
    model.responsibilities(x)
}

fn log_gaussian(x: &[f64], mean: &[f64], cov: &Covariance) -> f64 {
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let d = x.len() as f64;
    -0.5 * (d * (2.0 * PI).ln() + cov.log_det() + cov.mahalanobis_sq(&diff))
}

fn log_joint(weights: &[f64], means: &RowMatrix, covs: &[Covariance], x: &[f64], out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = weights[j].ln() + log_gaussian(x, means.row(j), &covs[j]);
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// k-means++ seeding: the first centroid is a uniformly chosen row, each
/// further one is drawn with probability proportional to its squared distance
/// to the nearest centroid chosen so far.
pub fn kmeanspp_init(data: &RowMatrix, m: usize, rng: &mut Rng) -> Result<RowMatrix> {
    let n = data.rows();
    if m == 0 {
        return Err(Error::Config("k-means++ needs at least one centroid".into()));
    }
    if m > n {
        return Err(Error::Config(format!("cannot seed {m} centroids from {n} rows")));
    }
    let mut chosen = Vec::with_capacity(m);
    chosen.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = data
        .iter_rows()
        .map(|r| squared_l2(r, data.row(chosen[0])))
        .collect();
    while chosen.len() < m {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final partial sum
            pick.unwrap_or_else(|| nearest.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // every remaining row coincides with a centroid; take an unused row
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        let c = data.row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_l2(data.row(i), c));
        }
    }
    Ok(data.select_rows(&chosen))
}

struct Restart {
    weights: Vec<f64>,
    means: RowMatrix,
    covariances: Vec<Covariance>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    rescues: usize,
}

/// Fits an `M`-component mixture by EM with k-means++ restarts.
pub fn fit_gmm(data: &RowMatrix, config: &GmmConfig) -> Result<GmmModel> {
    config.validate()?;
    let n = data.rows();
    if n == 0 || data.cols() == 0 {
        return Err(Error::Validation("cannot fit a GMM on empty data".into()));
    }
    if !data.all_finite() {
        return Err(Error::Validation("GMM data contains non-finite values".into()));
    }
    if config.components > n {
        return Err(Error::Config(format!(
            "{} components requested for {n} rows",
            config.components
        )));
    }

    let runs: Vec<Restart> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::derive(config.seed, &[rng::tag::GMM_RESTART, r as u64]);
            run_em(data, config, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if final_ll(run) > final_ll(&runs[best]) {
            best = i;
        }
    }
    let traces = runs.iter().map(|r| r.trace.clone()).collect();
    let win = runs.into_iter().nth(best).expect("restarts >= 1");
    Ok(GmmModel {
        final_log_likelihood: final_ll(&win),
        weights: win.weights,
        means: win.means,
        covariances: win.covariances,
        iterations_run: win.iterations,
        converged: win.converged,
        best_restart: best,
        log_likelihood_traces: traces,
        rescues: win.rescues,
    })
}

fn final_ll(r: &Restart) -> f64 {
    *r.trace.last().expect("trace is never empty")
}

fn run_em(data: &RowMatrix, cfg: &GmmConfig, rng: &mut Rng) -> Result<Restart> {
    let n = data.rows();
    let d = data.cols();
    let m = cfg.components;

    let global_mean = data.column_mean();
    let pooled = weighted_covariance(data.iter_rows(), None, &global_mean, cfg.covariance, cfg.cov_floor);

    let mut means = kmeanspp_init(data, m, rng)?;
    let mut weights = vec![1.0 / m as f64; m];
    let mut covariances = vec![pooled.clone(); m];

    let mut resp = vec![0.0; n * m];
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut rescues = 0;

    loop {
        // E-step
        let ll = e_step(data, &weights, &means, &covariances, &mut resp);
        if let Some(&prev) = trace.last() {
            let improvement = (ll - prev) / f64::max(prev.abs(), f64::MIN_POSITIVE);
            trace.push(ll);
            if improvement < cfg.tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if iterations == cfg.max_iters {
            break;
        }

        // M-step
        let mass: Vec<f64> = (0..m).map(|j| (0..n).map(|i| resp[i * m + j]).sum()).collect();
        let current = GmmSnapshot {
            weights: &weights,
            means: &means,
            covariances: &covariances,
        };
        let mut empty: Vec<usize> = (0..m).filter(|&j| mass[j] < 1e-10 * n as f64).collect();
        let rescue_rows = if empty.is_empty() {
            Vec::new()
        } else {
            current.lowest_density_rows(data, empty.len())
        };

        let mut new_means = RowMatrix::zeros(m, d);
        let mut new_covs = Vec::with_capacity(m);
        let mut new_weights = vec![0.0; m];
        for j in 0..m {
            if let Some(pos) = empty.iter().position(|&e| e == j) {
                new_means.row_mut(j).copy_from_slice(data.row(rescue_rows[pos]));
                new_covs.push(pooled.clone());
                new_weights[j] = 1.0 / n as f64;
                continue;
            }
            let col: Vec<f64> = (0..n).map(|i| resp[i * m + j]).collect();
            let mu = new_means.row_mut(j);
            for (i, r) in data.iter_rows().enumerate() {
                for (acc, v) in mu.iter_mut().zip(r) {
                    *acc += col[i] * v;
                }
            }
            mu.iter_mut().for_each(|v| *v /= mass[j]);
            new_covs.push(weighted_covariance(
                data.iter_rows(),
                Some(&col),
                new_means.row(j),
                cfg.covariance,
                cfg.cov_floor,
            ));
            new_weights[j] = mass[j] / n as f64;
        }
        if !empty.is_empty() {
            rescues += empty.len();
            empty.clear();
        }
        let total: f64 = new_weights.iter().sum();
        new_weights.iter_mut().for_each(|w| *w /= total);

        weights = new_weights;
        means = new_means;
        covariances = new_covs;
        iterations += 1;
    }

    Ok(Restart {
        weights,
        means,
        covariances,
        trace,
        iterations,
        converged,
        rescues,
    })
}

struct GmmSnapshot<'a> {
    weights: &'a [f64],
    means: &'a RowMatrix,
    covariances: &'a [Covariance],
}

impl GmmSnapshot<'_> {
    /// The `count` rows with lowest mixture density, ties by lower index.
    fn lowest_density_rows(&self, data: &RowMatrix, count: usize) -> Vec<usize> {
        let mut lj = vec![0.0; self.weights.len()];
        let mut dens: Vec<(f64, usize)> = data
            .iter_rows()
            .enumerate()
            .map(|(i, r)| {
                log_joint(self.weights, self.means, self.covariances, r, &mut lj);
                (log_sum_exp(&lj), i)
            })
            .collect();
        dens.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        dens.into_iter().take(count).map(|(_, i)| i).collect()
    }
}

/// Fills `resp` (row-major `N x M`) and returns the total log-likelihood.
fn e_step(
    data: &RowMatrix,
    weights: &[f64],
    means: &RowMatrix,
    covs: &[Covariance],
    resp: &mut [f64],
) -> f64 {
    let m = weights.len();
    let mut ll = 0.0;
    for (i, x) in data.iter_rows().enumerate() {
        let row = &mut resp[i * m..(i + 1) * m];
        log_joint(weights, means, covs, x, row);
        let lse = log_sum_exp(row);
        ll += lse;
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    ll
}

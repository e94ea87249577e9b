use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm, GmmConfig};
use crate::matrix::squared_l2;

use super::{check_size, SelectionParams, Strategy, SubsetSelection};

/// Unsupervised core-set: fit an `M`-component GMM and take, for each
/// component mean, the nearest training row.
///
/// Components are visited by descending weight and each claims the nearest
/// row not already taken, so the result always has exactly `M` rows even when
/// two means share a nearest neighbour.
pub fn select_gmm_coreset(train: &EmbeddingDataset, m: usize, cfg: &GmmConfig) -> Result<SubsetSelection> {
    check_size(m, train.len())?;
    if cfg.components != m {
        return Err(Error::Config(format!(
            "GMM has {} components but {m} samples were requested",
            cfg.components
        )));
    }
    let model = fit_gmm(train.vectors(), cfg)?;

    let mut taken = vec![false; train.len()];
    let mut indices = Vec::with_capacity(m);
    for j in model.components_by_weight() {
        let mu = model.means.row(j);
        let mut best: Option<(f64, usize)> = None;
        for i in (0..train.len()).filter(|&i| !taken[i]) {
            let d = squared_l2(train.row(i), mu);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best.expect("m <= n leaves an untaken row");
        taken[i] = true;
        indices.push(i);
    }

    Ok(SubsetSelection::new(
        Strategy::GmmCoreset,
        cfg.seed,
        indices,
        None,
        SelectionParams::GmmCoreset {
            components: cfg.components,
            covariance: cfg.covariance,
            restarts: cfg.restarts,
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            cov_floor: cfg.cov_floor,
            final_log_likelihood: model.final_log_likelihood,
            converged: model.converged,
        },
    ))
}

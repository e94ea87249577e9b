use crate::error::{Error, Result};
use crate::eval::auroc;

use super::{check_size, ScoreMatrix, SelectionParams, Strategy, SubsetSelection};

/// `1 - AUROC` of each training sample's single-sample scorer on validation.
pub fn per_sample_errors(scores: &ScoreMatrix) -> Vec<f64> {
    (0..scores.train_len())
        .map(|i| {
            1.0 - auroc(scores.row(i), scores.val_labels())
                .expect("score matrix invariants guarantee a valid AUROC")
        })
        .collect()
}

/// Takes the `m` samples with the smallest individual error (ties by lower
/// index). Minimising a separable sum over all size-`m` subsets reduces to this.
pub fn select_greedy(errors: &[f64], m: usize) -> Result<SubsetSelection> {
    check_size(m, errors.len())?;
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::Validation("per-sample errors must be finite".into()));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    order.truncate(m);
    let objective = order.iter().map(|&i| errors[i]).sum();
    Ok(SubsetSelection::new(
        Strategy::Greedy,
        0,
        order,
        Some(objective),
        SelectionParams::Greedy {},
    ))
}

//! AUROC, subset evaluation, sweeps and distance histograms.

mod histogram;
mod sweep;

pub use histogram::{distance_histogram, HistogramReport, SamplePoint};
pub use sweep::{
    dataset_fingerprint, run_sweep, FullTraining, GmmSettings, EvoSettings, RunRecord, SweepCell,
    SweepConfig, SweepMetadata, SweepReport,
};

use crate::dataset::{check_both_classes, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::scorers::{fit_scorer, ScorerSpec};

/// Area under the ROC curve with `+1` as the positive (anomalous) class.
///
/// Computed as the Mann–Whitney statistic from average ranks, so each tied
/// (positive, negative) pair counts one half.
pub fn auroc(scores: &[f64], labels: &[i8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::Validation(format!("label {l} is not -1 or +1")));
    }
    check_both_classes(labels, "AUROC")?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("AUROC scores must be finite".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their average
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        pos_rank_sum += avg_rank * positives as f64;
        start = end;
    }

    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// Fits `spec` on the given training rows and returns its AUROC on `eval_set`.
pub fn evaluate_subset(
    train: &EmbeddingDataset,
    subset: &[usize],
    eval_set: &EmbeddingDataset,
    spec: ScorerSpec,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty subset".into()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("subset indices must be distinct".into()));
    }
    let labels = eval_set.require_both_classes("evaluation set")?;
    let scorer = fit_scorer(spec, &train.subset(&sorted)?)?;
    let scores = scorer.score_batch(eval_set)?;
    auroc(&scores, labels)
}

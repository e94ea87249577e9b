use serde::Serialize;

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matrix::l2;
use crate::scorers::{fit_scorer, ScorerSpec};
use crate::selection::{per_sample_errors, ScoreMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub index: usize,
    pub distance: f64,
    /// AUROC of a scorer fitted on this sample alone.
    pub auroc: f64,
}

/// Distribution of training-sample distances to the training mean, with each
/// bin annotated by the mean single-sample AUROC of its members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramReport {
    pub scorer: ScorerSpec,
    /// `bins + 1` strictly increasing Euclidean distances.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// `None` for empty bins.
    pub mean_auroc: Vec<Option<f64>>,
    pub samples: Vec<SamplePoint>,
}

impl HistogramReport {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Mean single-sample AUROC of the nearest and the farthest
    /// `ceil(N / 10)` samples, as `(core, tail)`.
    pub fn decile_means(&self) -> (f64, f64) {
        let mut by_distance: Vec<&SamplePoint> = self.samples.iter().collect();
        by_distance.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
        let k = by_distance.len().div_ceil(10);
        let mean = |pts: &[&SamplePoint]| pts.iter().map(|p| p.auroc).sum::<f64>() / pts.len() as f64;
        (mean(&by_distance[..k]), mean(&by_distance[by_distance.len() - k..]))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("cannot serialize histogram: {e}")))?;
        s.push('\n');
        Ok(s)
    }
}

/// Bins training rows by their Euclidean distance to the training mean.
/// `scores` must have been computed from `train` (row `i` of the matrix is
/// training row `i`); `spec` is the scorer it was built with.
pub fn distance_histogram(
    train: &EmbeddingDataset,
    scores: &ScoreMatrix,
    spec: ScorerSpec,
    bins: usize,
) -> Result<HistogramReport> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if scores.train_len() != train.len() {
        return Err(Error::Validation(format!(
            "score matrix has {} rows for {} training samples",
            scores.train_len(),
            train.len()
        )));
    }
    if *scores.scorer_spec() != spec {
        return Err(Error::Validation(format!(
            "score matrix was built with {} but {} was requested",
            scores.scorer_spec(),
            spec
        )));
    }

    let centroid = fit_scorer(ScorerSpec::centroid(), train)?;
    let center = centroid.center().expect("centroid scorer has a center");
    let distances: Vec<f64> = (0..train.len()).map(|i| l2(train.row(i), center)).collect();
    let aurocs: Vec<f64> = per_sample_errors(scores).into_iter().map(|e| 1.0 - e).collect();

    let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();
    if hi > lo {
        edges[bins] = hi;
    }

    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0; bins];
    for (d, a) in distances.iter().zip(&aurocs) {
        let b = (((d - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
        sums[b] += a;
    }
    let mean_auroc = counts
        .iter()
        .zip(&sums)
        .map(|(&c, &s)| (c > 0).then(|| s / c as f64))
        .collect();
    let samples = distances
        .iter()
        .zip(&aurocs)
        .enumerate()
        .map(|(index, (&distance, &auroc))| SamplePoint {
            index,
            distance,
            auroc,
        })
        .collect();

    Ok(HistogramReport {
        scorer: spec,
        edges,
        counts,
        mean_auroc,
        samples,
    })
}

//! Feature-space anomaly scorers. Larger score means more anomalous.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{weighted_covariance, Covariance, CovarianceType};
use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matrix::{l1, l2, squared_l2, RowMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Mean distance to the k nearest training vectors.
    Knn,
    /// Squared L2 distance to the training mean.
    Centroid,
    /// Squared Mahalanobis distance under a floored Gaussian fit.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    L1,
    L2,
}

impl Distance {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::L1 => l1(a, b),
            Distance::L2 => l2(a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub kind: ScorerKind,
    pub k: usize,
    pub distance: Distance,
    pub cov_floor: f64,
}

impl Default for ScorerSpec {
    /// kNN with k = 2 under L1.
    fn default() -> Self {
        Self::knn(2, Distance::L1)
    }
}

impl ScorerSpec {
    pub fn knn(k: usize, distance: Distance) -> Self {
        Self {
            kind: ScorerKind::Knn,
            k,
            distance,
            cov_floor: 1e-6,
        }
    }

    pub fn centroid() -> Self {
        Self {
            kind: ScorerKind::Centroid,
            ..Self::default()
        }
    }

    pub fn gaussian(cov_floor: f64) -> Self {
        Self {
            kind: ScorerKind::Gaussian,
            cov_floor,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("scorer k must be >= 1".into()));
        }
        if !(self.cov_floor > 0.0 && self.cov_floor.is_finite()) {
            return Err(Error::Config(format!(
                "cov_floor must be a positive finite number, got {}",
                self.cov_floor
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScorerKind::Knn => write!(f, "knn(k={}, {:?})", self.k, self.distance),
            ScorerKind::Centroid => f.write_str("centroid"),
            ScorerKind::Gaussian => write!(f, "gaussian(floor={})", self.cov_floor),
        }
    }
}

#[derive(Debug, Clone)]
enum Model {
    Knn { reference: RowMatrix },
    Centroid { center: Vec<f64> },
    Gaussian { mean: Vec<f64>, covariance: Covariance },
}

#[derive(Debug, Clone)]
pub struct FittedScorer {
    spec: ScorerSpec,
    dim: usize,
    model: Model,
}

pub fn fit_scorer(spec: ScorerSpec, train: &EmbeddingDataset) -> Result<FittedScorer> {
    FittedScorer::fit(spec, train.vectors())
}

impl FittedScorer {
    /// Fits on the rows of `data`.
    pub fn fit(spec: ScorerSpec, data: &RowMatrix) -> Result<Self> {
        spec.validate()?;
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::Validation("cannot fit a scorer on an empty training set".into()));
        }
        if !data.all_finite() {
            return Err(Error::Validation("training data contains non-finite values".into()));
        }
        let model = match spec.kind {
            ScorerKind::Knn => Model::Knn {
                reference: data.clone(),
            },
            ScorerKind::Centroid => Model::Centroid {
                center: data.column_mean(),
            },
            ScorerKind::Gaussian => {
                let mean = data.column_mean();
                let covariance = weighted_covariance(
                    data.iter_rows(),
                    None,
                    &mean,
                    CovarianceType::default_for_dim(data.cols()),
                    spec.cov_floor,
                );
                Model::Gaussian { mean, covariance }
            }
        };
        Ok(Self {
            spec,
            dim: data.cols(),
            model,
        })
    }

    /// Fits on a single vector.
    pub fn fit_single(spec: ScorerSpec, x: &[f64]) -> Result<Self> {
        Self::fit(spec, &RowMatrix::new(1, x.len(), x.to_vec())?)
    }

    /// Gaussian scorer with an explicit mean and covariance.
    pub fn gaussian_from_parts(mean: Vec<f64>, covariance: Covariance, cov_floor: f64) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::Validation(format!(
                "mean has {} dims, covariance {}",
                mean.len(),
                covariance.dim()
            )));
        }
        Ok(Self {
            spec: ScorerSpec::gaussian(cov_floor),
            dim: mean.len(),
            model: Model::Gaussian { mean, covariance },
        })
    }

    pub fn spec(&self) -> &ScorerSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of retained reference vectors (kNN), or 1 for the summary models.
    pub fn reference_len(&self) -> usize {
        match &self.model {
            Model::Knn { reference } => reference.rows(),
            _ => 1,
        }
    }

    pub fn center(&self) -> Option<&[f64]> {
        match &self.model {
            Model::Centroid { center } => Some(center),
            Model::Gaussian { mean, .. } => Some(mean),
            Model::Knn { .. } => None,
        }
    }

    pub fn covariance(&self) -> Option<&Covariance> {
        match &self.model {
            Model::Gaussian { covariance, .. } => Some(covariance),
            _ => None,
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Validation(format!(
                "probe has {} dims, scorer expects {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("probe contains non-finite values".into()));
        }
        Ok(self.score_unchecked(x))
    }

    pub(crate) fn score_unchecked(&self, x: &[f64]) -> f64 {
        match &self.model {
            Model::Knn { reference } => {
                let k = self.spec.k.min(reference.rows());
                if k == 1 {
                    return reference
                        .iter_rows()
                        .map(|r| self.spec.distance.eval(r, x))
                        .fold(f64::INFINITY, f64::min);
                }
                let mut dists: Vec<f64> = reference
                    .iter_rows()
                    .map(|r| self.spec.distance.eval(r, x))
                    .collect();
                if k < dists.len() {
                    dists.select_nth_unstable_by(k - 1, f64::total_cmp);
                    dists.truncate(k);
                }
                dists.sort_unstable_by(f64::total_cmp);
                dists.iter().sum::<f64>() / k as f64
            }
            Model::Centroid { center } => squared_l2(center, x),
            Model::Gaussian { mean, covariance } => {
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                covariance.mahalanobis_sq(&diff).max(0.0)
            }
        }
    }

    /// Scores every row of `ds`, in order.
    pub fn score_batch(&self, ds: &EmbeddingDataset) -> Result<Vec<f64>> {
        self.score_rows(ds.vectors())
    }

    pub fn score_rows(&self, rows: &RowMatrix) -> Result<Vec<f64>> {
        if rows.cols() != self.dim {
            return Err(Error::Validation(format!(
                "batch has {} dims, scorer expects {}",
                rows.cols(),
                self.dim
            )));
        }
        if !rows.all_finite() {
            return Err(Error::Validation("batch contains non-finite values".into()));
        }
        Ok((0..rows.rows())
            .into_par_iter()
            .map(|i| self.score_unchecked(rows.row(i)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn ds(rows: &[&[f64]]) -> EmbeddingDataset {
        EmbeddingDataset::unlabeled(RowMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn centroid_is_column_mean() {
        let s = fit_scorer(ScorerSpec::centroid(), &ds(&[&[0.0, 0.0], &[2.0, 0.0]])).unwrap();
        assert_eq!(s.center().unwrap(), &[1.0, 0.0]);
        assert_eq!(s.score(&[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(s.score(&[3.0, 0.0]).unwrap(), 4.0);
    }

    #[test]
    fn gaussian_on_one_sample_is_floor_times_identity() {
        let s = fit_scorer(ScorerSpec::gaussian(1e-6), &ds(&[&[1.0, -2.0, 3.0]])).unwrap();
        assert_eq!(s.center().unwrap(), &[1.0, -2.0, 3.0]);
        let dense = s.covariance().unwrap().to_dense();
        for (i, v) in dense.iter().enumerate() {
            let expected = if i % 4 == 0 { 1e-6 } else { 0.0 };
            assert!((v - expected).abs() < 1e-18, "{dense:?}");
        }
    }

    #[test]
    fn knn_keeps_all_references() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let data = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&rows).unwrap()).unwrap();
        let s = fit_scorer(ScorerSpec::default(), &data).unwrap();
        assert_eq!(s.reference_len(), 5);
    }

    #[test]
    fn knn_l1_k2_hand_value() {
        let s = fit_scorer(ScorerSpec::knn(2, Distance::L1), &ds(&[&[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        assert_eq!(s.score(&[0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn knn_single_sample_uses_k_prime_one() {
        let s = fit_scorer(ScorerSpec::knn(2, Distance::L1), &ds(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(s.score(&[3.0, 4.0]).unwrap(), 7.0);
        let s = fit_scorer(ScorerSpec::knn(1, Distance::L2), &ds(&[&[0.0, 0.0]])).unwrap();
        assert_eq!(s.score(&[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(s.score(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_identity_cov_is_squared_l2() {
        let mut rng = crate::rng::seeded(11);
        let d = 5;
        let mean: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = FittedScorer::gaussian_from_parts(mean.clone(), Covariance::isotropic(d, 1.0), 1e-6).unwrap();
        let full = FittedScorer::gaussian_from_parts(
            mean.clone(),
            Covariance::from_full(&Covariance::isotropic(d, 1.0).to_dense(), d, 1e-6),
            1e-6,
        )
        .unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let direct: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!((s.score(&x).unwrap() - direct).abs() < 1e-12);
            assert!((full.score(&x).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_and_empty_fit() {
        let s = fit_scorer(ScorerSpec::default(), &ds(&[&[0.0, 0.0]])).unwrap();
        assert!(matches!(s.score(&[0.0]), Err(Error::Validation(_))));
        let probe = ds(&[&[0.0, 0.0, 0.0]]);
        assert!(s.score_batch(&probe).is_err());
        let empty = RowMatrix::new(0, 2, vec![]).unwrap();
        assert!(matches!(FittedScorer::fit(ScorerSpec::default(), &empty), Err(Error::Validation(_))));
        let bad = ScorerSpec { k: 0, ..ScorerSpec::default() };
        assert!(FittedScorer::fit(bad, &RowMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn batch_matches_scalar_loop() {
        let mut rng = crate::rng::seeded(5);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let probes: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let train = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&rows).unwrap()).unwrap();
        let probe = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&probes).unwrap()).unwrap();
        for spec in [ScorerSpec::knn(3, Distance::L2), ScorerSpec::centroid(), ScorerSpec::gaussian(1e-6)] {
            let s = fit_scorer(spec, &train).unwrap();
            let batch = s.score_batch(&probe).unwrap();
            let looped: Vec<f64> = probes.iter().map(|p| s.score(p).unwrap()).collect();
            assert_eq!(batch, looped);
        }
        let s = fit_scorer(ScorerSpec::centroid(), &train).unwrap();
        let same = ds(&[&[0.1, 0.2, 0.3, 0.4][..]; 3]);
        let out = s.score_batch(&same).unwrap();
        assert!(out[0] == out[1] && out[1] == out[2]);
        assert_eq!(s.score_batch(&ds(&[&[0.0; 4]])).unwrap().len(), 1);
    }

    #[test]
    fn single_sample_knn_and_centroid_rank_alike() {
        let mut rng = crate::rng::seeded(8);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probes: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let knn = FittedScorer::fit_single(ScorerSpec::knn(2, Distance::L2), &x).unwrap();
        let cen = FittedScorer::fit_single(ScorerSpec::centroid(), &x).unwrap();
        let rank = |s: &FittedScorer| {
            let sc: Vec<f64> = probes.iter().map(|p| s.score(p).unwrap()).collect();
            let mut idx: Vec<usize> = (0..sc.len()).collect();
            idx.sort_by(|&a, &b| sc[a].total_cmp(&sc[b]));
            idx
        };
        assert_eq!(rank(&knn), rank(&cen));
    }

    fn specs() -> impl Strategy<Value = ScorerSpec> {
        prop_oneof![
            (1usize..4, prop_oneof![Just(Distance::L1), Just(Distance::L2)]).prop_map(|(k, d)| ScorerSpec::knn(k, d)),
            Just(ScorerSpec::centroid()),
            Just(ScorerSpec::gaussian(1e-3)),
        ]
    }

    proptest! {
        #[test]
        fn translation_invariant_and_nonnegative(
            spec in specs(),
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8),
            probe in proptest::collection::vec(-5.0f64..5.0, 3),
            shift in proptest::collection::vec(-50.0f64..50.0, 3),
        ) {
            let base = FittedScorer::fit(spec, &RowMatrix::from_rows(&rows).unwrap()).unwrap();
            let moved_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&shift).map(|(a, t)| a + t).collect()).collect();
            let moved = FittedScorer::fit(spec, &RowMatrix::from_rows(&moved_rows).unwrap()).unwrap();
            let moved_probe: Vec<f64> = probe.iter().zip(&shift).map(|(a, t)| a + t).collect();
            let a = base.score(&probe).unwrap();
            let b = moved.score(&moved_probe).unwrap();
            prop_assert!(a >= 0.0 && a.is_finite());
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{} vs {}", a, b);
        }
    }
}

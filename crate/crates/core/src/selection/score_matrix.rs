use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{check_both_classes, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::scorers::{FittedScorer, ScorerSpec};

/// Entry `(i, k)` is the score of validation row `k` under a scorer fitted on
/// training row `i` alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    values: RowMatrix,
    val_labels: Vec<i8>,
    scorer: ScorerSpec,
}

impl ScoreMatrix {
    pub fn new(values: RowMatrix, val_labels: Vec<i8>, scorer: ScorerSpec) -> Result<Self> {
        if values.cols() != val_labels.len() {
            return Err(Error::Validation(format!(
                "score matrix has {} columns but {} labels",
                values.cols(),
                val_labels.len()
            )));
        }
        if values.rows() == 0 {
            return Err(Error::Validation("score matrix has no rows".into()));
        }
        if values.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation("score matrix entries must be finite and >= 0".into()));
        }
        if val_labels.iter().any(|&l| l != -1 && l != 1) {
            return Err(Error::Validation("validation labels must be -1 or +1".into()));
        }
        check_both_classes(&val_labels, "score matrix")?;
        Ok(Self {
            values,
            val_labels,
            scorer,
        })
    }

    /// Number of training rows.
    pub fn train_len(&self) -> usize {
        self.values.rows()
    }

    /// Number of validation columns.
    pub fn val_len(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values.get(i, k)
    }

    pub fn val_labels(&self) -> &[i8] {
        &self.val_labels
    }

    pub fn scorer_spec(&self) -> &ScorerSpec {
        &self.scorer
    }

    pub fn values(&self) -> &RowMatrix {
        &self.values
    }
}

pub fn compute_score_matrix(
    train: &EmbeddingDataset,
    val: &EmbeddingDataset,
    spec: ScorerSpec,
) -> Result<ScoreMatrix> {
    spec.validate()?;
    let labels = val.require_both_classes("score matrix validation set")?.to_vec();
    if train.dim() != val.dim() {
        return Err(Error::Validation(format!(
            "train has {} dims, val has {}",
            train.dim(),
            val.dim()
        )));
    }
    let v = val.len();
    let rows: Vec<Vec<f64>> = (0..train.len())
        .into_par_iter()
        .map(|i| {
            let scorer = FittedScorer::fit_single(spec, train.row(i))?;
            Ok((0..v).map(|k| scorer.score_unchecked(val.row(k))).collect())
        })
        .collect::<Result<_>>()?;
    let values = RowMatrix::new(train.len(), v, rows.into_iter().flatten().collect())?;
    ScoreMatrix::new(values, labels, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{fit_scorer, Distance};
    use rand::Rng;

    fn labeled(rows: &[Vec<f64>], labels: Vec<i8>) -> EmbeddingDataset {
        EmbeddingDataset::labeled(RowMatrix::from_rows(rows).unwrap(), labels).unwrap()
    }

    #[test]
    fn single_entry_hand_value() {
        let train = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        let val = labeled(&[vec![3.0, 4.0], vec![0.0, 1.0]], vec![1, -1]);
        let s = compute_score_matrix(&train, &val, ScorerSpec::knn(2, Distance::L1)).unwrap();
        assert_eq!(s.get(0, 0), 7.0);
        assert_eq!(s.get(0, 1), 1.0);
    }

    #[test]
    fn matches_per_pair_refit() {
        let mut rng = crate::rng::seeded(77);
        let mut gen = |n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
        };
        let train_rows = gen(8);
        let val_rows = gen(6);
        let train = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&train_rows).unwrap()).unwrap();
        let val = labeled(&val_rows, vec![-1, 1, -1, 1, 1, -1]);
        for spec in [ScorerSpec::default(), ScorerSpec::centroid(), ScorerSpec::gaussian(1e-4)] {
            let s = compute_score_matrix(&train, &val, spec).unwrap();
            for i in 0..8 {
                let one = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&[&train_rows[i]]).unwrap()).unwrap();
                let fitted = fit_scorer(spec, &one).unwrap();
                for k in 0..6 {
                    assert_eq!(s.get(i, k), fitted.score(&val_rows[k]).unwrap());
                }
            }
        }
    }

    #[test]
    fn duplicated_row_duplicates_matrix_row() {
        let train = EmbeddingDataset::unlabeled(
            RowMatrix::from_rows(&[[0.5, 1.0], [2.0, -1.0], [0.5, 1.0]]).unwrap(),
        )
        .unwrap();
        let val = labeled(&[vec![0.0, 0.0], vec![5.0, 5.0]], vec![-1, 1]);
        let s = compute_score_matrix(&train, &val, ScorerSpec::default()).unwrap();
        assert_eq!(s.row(0), s.row(2));
    }

    #[test]
    fn unlabeled_or_single_class_val_is_rejected() {
        let train = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&[[0.0]]).unwrap()).unwrap();
        let val = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&[[1.0], [2.0]]).unwrap()).unwrap();
        assert!(matches!(
            compute_score_matrix(&train, &val, ScorerSpec::default()),
            Err(Error::Validation(_))
        ));
        let val = labeled(&[vec![1.0], vec![2.0]], vec![-1, -1]);
        assert!(compute_score_matrix(&train, &val, ScorerSpec::default()).is_err());
    }
}

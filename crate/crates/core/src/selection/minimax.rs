use crate::dataset::EmbeddingDataset;
use crate::error::Result;
use crate::matrix::{l2, squared_l2};

use super::{check_size, SelectionParams, Strategy, SubsetSelection};

/// Farthest-point (greedy k-center) selection. Starts from the row nearest the
/// data mean, then repeatedly adds the row farthest from everything chosen so
/// far. The resulting coverage radius is at most twice the optimum.
///
/// `seed` is recorded but unused: the start point is deterministic.
pub fn select_minimax_coverage(train: &EmbeddingDataset, m: usize, seed: u64) -> Result<SubsetSelection> {
    let n = train.len();
    check_size(m, n)?;
    let mean = train.vectors().column_mean();
    let start = argmin((0..n).map(|i| squared_l2(train.row(i), &mean)));

    let mut indices = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    indices.push(start);
    taken[start] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| l2(train.row(i), train.row(start))).collect();
    while indices.len() < m {
        // chosen rows are masked so duplicate points cannot be picked twice
        let next = argmax((0..n).map(|i| if taken[i] { f64::NEG_INFINITY } else { nearest[i] }));
        indices.push(next);
        taken[next] = true;
        let c = train.row(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(l2(train.row(i), c));
        }
    }
    let radius = nearest.iter().copied().fold(0.0, f64::max);

    Ok(SubsetSelection::new(
        Strategy::MinimaxCoverage,
        seed,
        indices,
        Some(radius),
        SelectionParams::MinimaxCoverage { start: "nearest_to_mean" },
    ))
}

/// `max_i min_{j ∈ subset} ‖x_i - x_j‖₂`.
pub fn coverage_radius(train: &EmbeddingDataset, subset: &[usize]) -> f64 {
    (0..train.len())
        .map(|i| {
            subset
                .iter()
                .map(|&j| l2(train.row(i), train.row(j)))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in values.enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best.1
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (i, v) in values.enumerate() {
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RowMatrix;

    fn line(n: usize) -> EmbeddingDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        EmbeddingDataset::unlabeled(RowMatrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn collinear_trace() {
        // mean 4.5: rows 4 and 5 tie, lower index wins; farthest from 4 is 0 (dist 4) vs 9 (dist 5)
        let s = select_minimax_coverage(&line(10), 2, 0).unwrap();
        assert_eq!(s.indices, vec![4, 9]);
        let r = s.achieved_objective.unwrap();
        assert!(r <= 5.0);
        assert_eq!(r, 4.0);
        assert_eq!(coverage_radius(&line(10), &s.indices), r);
    }

    #[test]
    fn full_selection_has_zero_radius() {
        let s = select_minimax_coverage(&line(7), 7, 0).unwrap();
        assert_eq!(s.achieved_objective, Some(0.0));
        let mut idx = s.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_points_are_never_selected_twice() {
        let rows = vec![vec![1.0], vec![1.0], vec![1.0], vec![3.0]];
        let train = EmbeddingDataset::unlabeled(RowMatrix::from_rows(&rows).unwrap()).unwrap();
        let s = select_minimax_coverage(&train, 4, 0).unwrap();
        let mut idx = s.indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn radius_does_not_grow_with_m() {
        let train = line(13);
        let radii: Vec<f64> = (1..=13)
            .map(|m| select_minimax_coverage(&train, m, 0).unwrap().achieved_objective.unwrap())
            .collect();
        assert!(radii.windows(2).all(|w| w[1] <= w[0]), "{radii:?}");
    }
}

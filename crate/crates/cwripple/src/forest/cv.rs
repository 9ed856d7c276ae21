//! Grid search with seeded k-fold cross-validation.

use rayon::prelude::*;

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::{fit, predict, ForestHyperparams};

/// One grid entry with its per-fold and mean validation RMSE.
#[derive(Debug, Clone)]
pub struct CvEntry {
    pub hp: ForestHyperparams,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Deterministic k-fold partition: shuffle the row indices with the seed,
/// then cut the shuffled order into k contiguous folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    (0..k)
        .map(|i| order[i * n / k..(i + 1) * n / k].to_vec())
        .collect()
}

fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len() as f64;
    (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt()
}

/// Evaluate every hyperparameter set by k-fold cross-validation and return
/// the winner plus the full table.
///
/// The winner has the lowest mean validation RMSE; exact ties fall to the
/// cheaper model (fewer trees, then shallower depth, then larger leaves).
pub fn grid_search_cv(
    matrix: &FeatureMatrix,
    targets: &[f64],
    grid: &[ForestHyperparams],
    k: usize,
    seed: u64,
) -> Result<(ForestHyperparams, Vec<CvEntry>)> {
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid is empty".into()));
    }
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    if matrix.n_rows < k {
        return Err(Error::InvalidParameter(format!(
            "cannot make {k} folds from {} rows",
            matrix.n_rows
        )));
    }
    if matrix.n_rows != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows but {} targets given",
            matrix.n_rows,
            targets.len()
        )));
    }

    let folds = kfold_indices(matrix.n_rows, k, seed);
    let entries: Vec<CvEntry> = grid
        .par_iter()
        .map(|hp| -> Result<CvEntry> {
            let mut fold_rmse = Vec::with_capacity(k);
            for fold in &folds {
                let in_fold = {
                    let mut mask = vec![false; matrix.n_rows];
                    for &i in fold {
                        mask[i] = true;
                    }
                    mask
                };
                let train_rows: Vec<usize> =
                    (0..matrix.n_rows).filter(|&i| !in_fold[i]).collect();
                let x_train = matrix.select_rows(&train_rows);
                let y_train: Vec<f64> = train_rows.iter().map(|&i| targets[i]).collect();
                let x_val = matrix.select_rows(fold);
                let y_val: Vec<f64> = fold.iter().map(|&i| targets[i]).collect();

                let model = fit(&x_train, &y_train, hp)?;
                let pred = predict(&model, &x_val)?;
                fold_rmse.push(rmse(&pred, &y_val));
            }
            let mean_rmse = fold_rmse.iter().sum::<f64>() / k as f64;
            Ok(CvEntry { hp: hp.clone(), fold_rmse, mean_rmse })
        })
        .collect::<Result<_>>()?;

    let best = entries
        .iter()
        .min_by(|a, b| {
            let depth_key = |hp: &ForestHyperparams| hp.max_depth.map_or(u32::MAX, |d| d);
            a.mean_rmse
                .partial_cmp(&b.mean_rmse)
                .unwrap()
                .then(a.hp.n_trees.cmp(&b.hp.n_trees))
                .then(depth_key(&a.hp).cmp(&depth_key(&b.hp)))
                .then(b.hp.min_samples_leaf.cmp(&a.hp.min_samples_leaf))
        })
        .expect("grid is nonempty");

    Ok((best.hp.clone(), entries))
}

/// Default search grid: brackets memorization against regularization at the
/// few-hundred-sample scale of the sweep dataset.
pub fn default_grid(n_features: usize, seed: u64) -> Vec<ForestHyperparams> {
    let sqrt_fraction = (n_features as f64).sqrt() / n_features as f64;
    let mut grid = Vec::new();
    for &n_trees in &[100usize, 300] {
        for &max_depth in &[None, Some(8u32), Some(16)] {
            for &min_samples_leaf in &[1usize, 2, 5] {
                for &feature_fraction in &[1.0 / 3.0, sqrt_fraction] {
                    grid.push(ForestHyperparams {
                        n_trees,
                        max_depth,
                        min_samples_leaf,
                        feature_fraction,
                        seed,
                        bootstrap: true,
                    });
                }
            }
        }
    }
    grid
}

/// Render the CV table as aligned text for the training report.
pub fn cv_table_text(entries: &[CvEntry], best: &ForestHyperparams) -> String {
    let mut out = String::new();
    out.push_str("trees  depth  min_leaf  feat_frac  mean_rmse_v  marker\n");
    for e in entries {
        let depth = e.hp.max_depth.map_or("none".to_string(), |d| d.to_string());
        let marker = if &e.hp == best { "  <- best" } else { "" };
        out.push_str(&format!(
            "{:>5}  {:>5}  {:>8}  {:>9.4}  {:>11.4}{}\n",
            e.hp.n_trees, depth, e.hp.min_samples_leaf, e.hp.feature_fraction, e.mean_rmse, marker
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureMode;

    fn noise_data(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = SplitMix64::new(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.next_f64()).collect())
            .collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let names = (0..3).map(|i| format!("f{i}")).collect();
        (FeatureMatrix::from_rows(names, FeatureMode::ParamsOnly, &rows).unwrap(), ys)
    }

    #[test]
    fn folds_partition_all_rows() {
        let folds = kfold_indices(103, 5, 7);
        assert_eq!(folds.len(), 5);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        // Contiguous cuts of a shuffled order leave fold sizes within 1.
        for fold in &folds {
            assert!(fold.len() == 20 || fold.len() == 21);
        }
    }

    #[test]
    fn single_entry_grid_returns_it() {
        let (x, y) = noise_data(40, 1);
        let hp = ForestHyperparams { n_trees: 5, ..Default::default() };
        let (best, table) = grid_search_cv(&x, &y, &[hp.clone()], 4, 3).unwrap();
        assert_eq!(best, hp);
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].fold_rmse.len(), 4);
    }

    #[test]
    fn regularized_model_wins_on_pure_noise() {
        let (x, y) = noise_data(120, 2);
        let memorizer = ForestHyperparams {
            n_trees: 20,
            max_depth: None,
            min_samples_leaf: 1,
            feature_fraction: 1.0,
            seed: 5,
            bootstrap: true,
        };
        let regularized = ForestHyperparams {
            min_samples_leaf: 30,
            ..memorizer.clone()
        };
        let (best, table) = grid_search_cv(
            &x,
            &y,
            &[memorizer.clone(), regularized.clone()],
            5,
            11,
        )
        .unwrap();
        assert_eq!(best, regularized, "cv table: {table:?}");
    }

    #[test]
    fn cv_is_deterministic() {
        let (x, y) = noise_data(60, 3);
        let grid = vec![
            ForestHyperparams { n_trees: 8, ..Default::default() },
            ForestHyperparams { n_trees: 8, min_samples_leaf: 4, ..Default::default() },
        ];
        let (best_a, table_a) = grid_search_cv(&x, &y, &grid, 5, 17).unwrap();
        let (best_b, table_b) = grid_search_cv(&x, &y, &grid, 5, 17).unwrap();
        assert_eq!(best_a, best_b);
        for (a, b) in table_a.iter().zip(&table_b) {
            assert_eq!(a.fold_rmse, b.fold_rmse);
            assert_eq!(a.mean_rmse, b.mean_rmse);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let (x, y) = noise_data(20, 4);
        assert!(grid_search_cv(&x, &y, &[], 5, 0).is_err());
    }

    #[test]
    fn default_grid_has_expected_shape() {
        let grid = default_grid(16, 42);
        assert_eq!(grid.len(), 36);
        assert!(grid.iter().all(|hp| hp.seed == 42 && hp.bootstrap));
        assert!(grid.iter().any(|hp| hp.max_depth.is_none()));
        assert!(grid.iter().any(|hp| (hp.feature_fraction - 0.25).abs() < 1e-12));
    }
}

//! From-scratch Random Forest regressor.
//!
//! Bagged CART trees with per-split feature subsampling, impurity-based
//! feature importance, and a versioned JSON model file. Every random draw
//! comes from [`SplitMix64`] seeded as `seed ^ tree_index`, so a fit is
//! reproducible bit for bit regardless of how trees are scheduled across
//! threads.

mod cv;
mod tree;

pub use cv::{default_grid, grid_search_cv, kfold_indices, CvEntry};
pub use tree::{Tree, TreeNode};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeatureMatrix, FeatureMode};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const FOREST_SCHEMA_VERSION: &str = "cwripple-forest-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// `None` grows trees until the leaf-size or purity stops bind.
    pub max_depth: Option<u32>,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn (without replacement) as candidates at
    /// every split; the draw count is `ceil(fraction * n_features)`.
    pub feature_fraction: f64,
    pub seed: u64,
    /// Bagging switch. Kept as a plain field so oracle tests can train on
    /// the un-resampled data.
    pub bootstrap: bool,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            feature_fraction: 1.0 / 3.0,
            seed: 42,
            bootstrap: true,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "feature_fraction must be in (0, 1], got {}",
                self.feature_fraction
            )));
        }
        Ok(())
    }
}

/// Trained ensemble plus the metadata needed to reuse it safely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub schema_version: String,
    pub feature_mode: FeatureMode,
    pub feature_names: Vec<String>,
    pub hyperparams: ForestHyperparams,
    /// SHA-256 over the training matrix and targets.
    pub dataset_fingerprint: String,
    /// Min and max of the training targets; every ensemble prediction lies
    /// inside this interval.
    pub target_range: (f64, f64),
    /// Normalized impurity-decrease importance per feature (sums to 1 when
    /// any split exists, all zeros otherwise).
    pub importances: Vec<f64>,
    pub trees: Vec<Tree>,
}

/// SHA-256 fingerprint of a training set.
pub fn dataset_fingerprint(matrix: &FeatureMatrix, targets: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for name in &matrix.feature_names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    hasher.update(matrix.mode.to_string().as_bytes());
    for v in matrix.values() {
        hasher.update(v.to_le_bytes());
    }
    for t in targets {
        hasher.update(t.to_le_bytes());
    }
    format!("sha256:{}", hex::encode(hasher.finalize()))
}

/// Fit a forest on the matrix and targets.
pub fn fit(matrix: &FeatureMatrix, targets: &[f64], hp: &ForestHyperparams) -> Result<ForestModel> {
    hp.validate()?;
    if matrix.n_rows != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows but {} targets given",
            matrix.n_rows,
            targets.len()
        )));
    }
    if matrix.n_rows < 2 {
        return Err(Error::Empty("forest fit needs at least 2 rows".into()));
    }
    for (i, t) in targets.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite { context: "training targets", case_id: i as u32 });
        }
    }

    let n = matrix.n_rows;
    let fitted: Vec<tree::FittedTree> = (0..hp.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = SplitMix64::new(hp.seed ^ tree_index as u64);
            let rows: Vec<usize> = if hp.bootstrap {
                (0..n).map(|_| rng.below(n as u64) as usize).collect()
            } else {
                (0..n).collect()
            };
            tree::grow_tree(matrix, targets, rows, hp, rng)
        })
        .collect();

    // Average the raw accumulations over trees, then normalize to sum 1.
    let mut importances = vec![0.0; matrix.n_cols];
    for f in &fitted {
        for (acc, v) in importances.iter_mut().zip(&f.importance) {
            *acc += v;
        }
    }
    for v in importances.iter_mut() {
        *v /= hp.n_trees as f64;
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in importances.iter_mut() {
            *v /= total;
        }
    }

    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for &t in targets {
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }

    Ok(ForestModel {
        schema_version: FOREST_SCHEMA_VERSION.to_string(),
        feature_mode: matrix.mode,
        feature_names: matrix.feature_names.clone(),
        hyperparams: hp.clone(),
        dataset_fingerprint: dataset_fingerprint(matrix, targets),
        target_range: (t_min, t_max),
        importances,
        trees: fitted.into_iter().map(|f| f.tree).collect(),
    })
}

/// Ensemble-mean prediction for every row of the matrix.
pub fn predict(model: &ForestModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    if matrix.n_cols != model.feature_names.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} columns but the model expects {}",
            matrix.n_cols,
            model.feature_names.len()
        )));
    }
    let n_trees = model.trees.len() as f64;
    Ok((0..matrix.n_rows)
        .map(|r| {
            let row = matrix.row(r);
            model.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / n_trees
        })
        .collect())
}

/// Per-feature importance scores of a fitted model.
pub fn feature_importance(model: &ForestModel) -> &[f64] {
    &model.importances
}

impl ForestModel {
    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        predict(self, matrix)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        use std::io::Write;
        writeln!(w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let model: ForestModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        if model.schema_version != FOREST_SCHEMA_VERSION {
            return Err(Error::Parse {
                path: path.display().to_string(),
                message: format!(
                    "unsupported model schema {:?}, expected {FOREST_SCHEMA_VERSION:?}",
                    model.schema_version
                ),
            });
        }
        Ok(model)
    }

    /// Importances sorted descending, as (name, score) pairs.
    pub fn ranked_importances(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.importances.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        pairs
    }
}

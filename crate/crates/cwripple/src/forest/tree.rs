//! CART regression tree with exact variance-reduction split search.
//!
//! Split candidates are the midpoints of consecutive distinct sorted values
//! of each candidate feature; the dataset is small, so the exact search is
//! affordable and keeps the splits testable against brute force. All
//! per-node sums run over canonically sorted values, which makes a fitted
//! tree independent of the training row order (bootstrap aside).

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::rng::SplitMix64;

use super::ForestHyperparams;

/// Flattened tree node; children are indices into the tree's node array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Mean of the training targets that reached the node.
        value: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Route one feature row to its leaf. Rows with `value <= threshold`
    /// descend left.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Internal { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Node target summary, accumulated over value-sorted targets so the sums
/// do not depend on row order.
struct NodeStats {
    sum: f64,
    sse: f64,
    y_min: f64,
    y_max: f64,
}

fn node_stats(y: &[f64], idx: &[usize]) -> NodeStats {
    let mut ys: Vec<f64> = idx.iter().map(|&r| y[r]).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).expect("targets are finite"));
    let n = ys.len() as f64;
    let sum: f64 = ys.iter().sum();
    let sumsq: f64 = ys.iter().map(|v| v * v).sum();
    NodeStats {
        sum,
        sse: (sumsq - sum * sum / n).max(0.0),
        y_min: ys[0],
        y_max: *ys.last().unwrap(),
    }
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    children_sse: f64,
}

pub(super) struct FittedTree {
    pub tree: Tree,
    /// Un-normalized per-feature impurity decrease accumulated over the
    /// tree's splits, weighted by node size over the training-set size.
    pub importance: Vec<f64>,
}

pub(super) fn grow_tree(
    x: &FeatureMatrix,
    y: &[f64],
    rows: Vec<usize>,
    hp: &ForestHyperparams,
    rng: SplitMix64,
) -> FittedTree {
    let n_features = x.n_cols;
    let subset = ((hp.feature_fraction * n_features as f64).ceil() as usize).clamp(1, n_features);
    let mut builder = Builder {
        x,
        y,
        hp,
        rng,
        subset,
        nodes: Vec::new(),
        importance: vec![0.0; n_features],
        n_total: rows.len() as f64,
    };
    builder.build(&rows, 0);
    FittedTree { tree: Tree { nodes: builder.nodes }, importance: builder.importance }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    hp: &'a ForestHyperparams,
    rng: SplitMix64,
    subset: usize,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
    n_total: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, stats: &NodeStats, n: usize) -> usize {
        // A constant node keeps the exact target value instead of the
        // rounded mean.
        let value = if stats.y_min == stats.y_max { stats.y_min } else { stats.sum / n as f64 };
        self.nodes.push(TreeNode::Leaf { value, count: n });
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: &[usize], depth: u32) -> usize {
        let stats = node_stats(self.y, rows);
        let n = rows.len();
        let at_depth_limit = self.hp.max_depth.is_some_and(|d| depth >= d);
        if at_depth_limit || n < 2 * self.hp.min_samples_leaf || stats.y_min == stats.y_max {
            return self.leaf(&stats, n);
        }

        // Candidate features in ascending index order so ties resolve to
        // the lower feature, then the lower threshold.
        let candidates = self.rng.sample_indices(self.x.n_cols, self.subset);
        let mut best: Option<BestSplit> = None;
        for feature in candidates {
            self.scan_feature(rows, feature, &mut best);
        }

        let Some(split) = best else {
            return self.leaf(&stats, n);
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x.get(r, split.feature) <= split.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let decrease = (stats.sse - split.children_sse).max(0.0);
        self.importance[split.feature] += decrease / self.n_total;

        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0, count: 0 }); // placeholder
        let left = self.build(&left_rows, depth + 1);
        let right = self.build(&right_rows, depth + 1);
        self.nodes[slot] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }

    fn scan_feature(&self, rows: &[usize], feature: usize, best: &mut Option<BestSplit>) {
        let mut pairs: Vec<(f64, f64)> = rows
            .iter()
            .map(|&r| (self.x.get(r, feature), self.y[r]))
            .collect();
        // Sorting by (value, target) makes the prefix sums canonical.
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("features and targets are finite"));

        let n = pairs.len();
        let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
        let total_sq: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let msl = self.hp.min_samples_leaf;

        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for i in 0..n - 1 {
            left_sum += pairs[i].1;
            left_sq += pairs[i].1 * pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue; // not a boundary between distinct values
            }
            let n_l = i + 1;
            let n_r = n - n_l;
            if n_l < msl || n_r < msl {
                continue;
            }
            let sse_l = (left_sq - left_sum * left_sum / n_l as f64).max(0.0);
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse_r = (right_sq - right_sum * right_sum / n_r as f64).max(0.0);
            let score = sse_l + sse_r;
            if best.as_ref().is_none_or(|b| score < b.children_sse) {
                // Midpoint of the two distinct neighbours; if rounding lands
                // it on the upper value, fall back to the lower one so that
                // `<=` routing reproduces the scanned partition exactly.
                let mid = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                let threshold = if mid >= pairs[i + 1].0 { pairs[i].0 } else { mid };
                *best = Some(BestSplit { feature, threshold, children_sse: score });
            }
        }
    }
}

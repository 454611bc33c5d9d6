//! CART regression tree with variance-reduction splits.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, MaxFeatures};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        prediction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction } => return *prediction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// A fitted tree together with the feature dimension it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.root.predict(x))
    }
}

/// Fits a tree on all rows of `x`.
pub fn fit_tree<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    max_depth: usize,
    max_features: MaxFeatures,
    rng: &mut R,
) -> Result<DecisionTree> {
    let n_features = check_xy(x, y)?;
    let rows: Vec<usize> = (0..x.len()).collect();
    Ok(DecisionTree {
        root: fit_on_rows(x, y, rows, max_depth, max_features, rng),
        n_features,
    })
}

/// Fits a tree on the (possibly repeated) row indices `rows`.
pub(crate) fn fit_on_rows<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    max_depth: usize,
    max_features: MaxFeatures,
    rng: &mut R,
) -> TreeNode {
    let n_features = x.first().map_or(0, Vec::len);
    let k = max_features.resolve(n_features);
    grow(x, y, rows, 0, max_depth, n_features, k, rng)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    sse: f64,
}

#[allow(clippy::too_many_arguments)]
fn grow<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    n_features: usize,
    k: usize,
    rng: &mut R,
) -> TreeNode {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n;
    let leaf = TreeNode::Leaf { prediction: mean };
    if depth >= max_depth || rows.len() <= 1 || n_features == 0 {
        return leaf;
    }
    let parent_sse: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
    if parent_sse <= 1e-12 * (1.0 + mean.abs()).powi(2) * n {
        return leaf;
    }

    let candidates: Vec<usize> = if k >= n_features {
        (0..n_features).collect()
    } else {
        index::sample(rng, n_features, k).into_vec()
    };

    let mut best: Option<BestSplit> = None;
    let mut order = rows.clone();
    for &f in &candidates {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        // Running sums of mean-centred targets keep the SSE well conditioned.
        let total: f64 = order.iter().map(|&r| y[r] - mean).sum();
        let total_sq: f64 = order.iter().map(|&r| (y[r] - mean).powi(2)).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for i in 0..order.len() - 1 {
            let d = y[order[i]] - mean;
            s += d;
            sq += d * d;
            let (lo, hi) = (x[order[i]][f], x[order[i + 1]][f]);
            if lo == hi {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = n - nl;
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.as_ref().is_none_or(|b| sse < b.sse) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    sse,
                });
            }
        }
    }

    let Some(split) = best else { return leaf };
    if split.sse >= parent_sse * (1.0 - 1e-12) {
        return leaf;
    }
    let (left, right): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&r| x[r][split.feature] <= split.threshold);
    let left = grow(x, y, left, depth + 1, max_depth, n_features, k, rng);
    let right = grow(x, y, right, depth + 1, max_depth, n_features, k, rng);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

//! Bagged random forest of CART trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_on_rows, TreeNode};
use super::{check_xy, MaxFeatures};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub rng_seed: u64,
    pub n_features: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestOptions {
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Per-node candidate features; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<MaxFeatures>,
    pub bootstrap: bool,
}

impl ForestOptions {
    pub fn new(n_estimators: usize, max_depth: usize) -> Self {
        Self {
            n_estimators,
            max_depth,
            max_features: None,
            bootstrap: true,
        }
    }
}

/// Independent random stream for tree `index` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sqrt_features(p: usize) -> usize {
    (p as f64).sqrt().ceil() as usize
}

pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    n_estimators: usize,
    max_depth: usize,
    seed: u64,
) -> Result<ForestModel> {
    fit_forest_with(x, y, ForestOptions::new(n_estimators, max_depth), seed)
}

pub fn fit_forest_with(
    x: &[Vec<f64>],
    y: &[f64],
    opts: ForestOptions,
    seed: u64,
) -> Result<ForestModel> {
    let n_features = check_xy(x, y)?;
    if opts.n_estimators == 0 {
        return Err(Error::InvalidConfig("n_estimators must be >= 1".into()));
    }
    let max_features = opts
        .max_features
        .unwrap_or(MaxFeatures::Count(sqrt_features(n_features)));
    let n = x.len();
    let trees: Vec<TreeNode> = (0..opts.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let rows: Vec<usize> = if opts.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_on_rows(x, y, rows, opts.max_depth, max_features, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_estimators: opts.n_estimators,
        max_depth: opts.max_depth,
        max_features: max_features.resolve(n_features),
        rng_seed: seed,
        n_features,
    })
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::tree::fit_tree;
    use proptest::prelude::*;
    use rand::Rng;

    fn planted(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| 3.0 * r[0] - 2.0 * (r[1] > 0.5) as u8 as f64 + 0.1 * rng.random::<f64>())
            .collect();
        (x, y)
    }

    #[test]
    fn constant_targets_give_constant_predictions() {
        let (x, _) = planted(20, 1);
        let f = fit_forest(&x, &[2.5; 20], 10, 5, 3).unwrap();
        for r in &x {
            assert_eq!(f.predict(r).unwrap(), 2.5);
        }
    }

    #[test]
    fn single_unbootstrapped_tree_equals_fit_tree() {
        let (x, y) = planted(40, 2);
        let opts = ForestOptions {
            bootstrap: false,
            ..ForestOptions::new(1, 4)
        };
        let forest = fit_forest_with(&x, &y, opts, 11).unwrap();
        let tree = fit_tree(
            &x,
            &y,
            4,
            MaxFeatures::Count(sqrt_features(6)),
            &mut tree_rng(11, 0),
        )
        .unwrap();
        assert_eq!(forest.trees[0], tree.root);
        for r in &x {
            assert_eq!(forest.predict(r).unwrap(), tree.predict(r).unwrap());
        }
    }

    #[test]
    fn copies_of_one_tree_average_to_it() {
        let (x, y) = planted(30, 4);
        let tree = fit_tree(&x, &y, 3, MaxFeatures::All, &mut tree_rng(0, 0)).unwrap();
        let forest = ForestModel {
            trees: vec![tree.root.clone(); 4],
            n_estimators: 4,
            max_depth: 3,
            max_features: 6,
            rng_seed: 0,
            n_features: 6,
        };
        for r in &x {
            let diff = forest.predict(r).unwrap() - tree.predict(r).unwrap();
            assert!(diff.abs() < 1e-12);
        }
    }

    #[test]
    fn beats_the_mean_predictor_on_held_out_rows() {
        let (x, y) = planted(300, 5);
        let (xtr, xte) = x.split_at(200);
        let (ytr, yte) = y.split_at(200);
        let f = fit_forest(xtr, ytr, 50, 10, 9).unwrap();
        let mse = xte
            .iter()
            .zip(yte)
            .map(|(r, v)| (f.predict(r).unwrap() - v).powi(2))
            .sum::<f64>()
            / yte.len() as f64;
        let mean = yte.iter().sum::<f64>() / yte.len() as f64;
        let var = yte.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / yte.len() as f64;
        assert!(mse < var, "mse {mse} vs variance {var}");
    }

    #[test]
    fn reproducible_across_runs_and_thread_counts() {
        let (x, y) = planted(60, 6);
        let a = fit_forest(&x, &y, 16, 6, 42).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| fit_forest(&x, &y, 16, 6, 42).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, fit_forest(&x, &y, 16, 6, 43).unwrap());
    }

    proptest! {
        #[test]
        fn forest_predictions_within_target_range(seed in 0u64..1000, n in 5usize..40) {
            let (x, y) = planted(n, seed);
            let f = fit_forest(&x, &y, 5, 8, seed).unwrap();
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in &x {
                let p = f.predict(r).unwrap();
                prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
            }
        }
    }
}

//! Regressors mapping TF-IDF features to a latent trait.

pub mod forest;
pub mod linear;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textpipe::Encoding;

pub use forest::{fit_forest, fit_forest_with, ForestModel, ForestOptions};
pub use linear::{fit_linear, LinearModel};
pub use tree::{fit_tree, DecisionTree, TreeNode};

/// Number of candidate features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxFeatures {
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k.clamp(1, n_features.max(1)),
        }
    }
}

impl Serialize for MaxFeatures {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxFeatures::All => s.serialize_str("all"),
            MaxFeatures::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for MaxFeatures {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(MaxFeatures::Count(k)),
            Raw::Name(s) if s == "all" => Ok(MaxFeatures::All),
            Raw::Name(s) => Err(serde::de::Error::custom(format!(
                "max_features must be a count or \"all\", got {s:?}"
            ))),
        }
    }
}

/// Validates a feature matrix against its targets; returns the feature count.
pub(crate) fn check_xy(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Empty("feature matrix"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let p = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: r.len(),
        });
    }
    Ok(p)
}

/// One point of a model-selection grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum HyperParams {
    Rf {
        n_estimators: usize,
        max_depth: usize,
    },
    Dt {
        max_features: MaxFeatures,
        max_depth: usize,
    },
    Lr {
        normalize: bool,
    },
}

impl HyperParams {
    pub fn kind(&self) -> &'static str {
        match self {
            HyperParams::Rf { .. } => "rf",
            HyperParams::Dt { .. } => "dt",
            HyperParams::Lr { .. } => "lr",
        }
    }

    /// A depth-0 tree: always predicts the training mean.
    pub fn mean_control() -> Self {
        HyperParams::Dt {
            max_features: MaxFeatures::All,
            max_depth: 0,
        }
    }

    pub fn rf_grid() -> Vec<HyperParams> {
        let mut grid = Vec::new();
        for n_estimators in [10, 25, 50, 100, 150, 200, 250] {
            for max_depth in [2, 5, 10, 15, 25, 50] {
                grid.push(HyperParams::Rf {
                    n_estimators,
                    max_depth,
                });
            }
        }
        grid
    }

    pub fn dt_grid() -> Vec<HyperParams> {
        let features = [1, 2, 3, 4, 5]
            .map(MaxFeatures::Count)
            .into_iter()
            .chain([MaxFeatures::All]);
        let mut grid = Vec::new();
        for max_features in features {
            for max_depth in [2, 5, 10, 20, 50] {
                grid.push(HyperParams::Dt {
                    max_features,
                    max_depth,
                });
            }
        }
        grid
    }

    pub fn lr_grid() -> Vec<HyperParams> {
        vec![
            HyperParams::Lr { normalize: true },
            HyperParams::Lr { normalize: false },
        ]
    }

    /// Every model family's default grid.
    pub fn default_grid() -> Vec<HyperParams> {
        let mut g = Self::rf_grid();
        g.extend(Self::dt_grid());
        g.extend(Self::lr_grid());
        g
    }

    pub fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Model> {
        Ok(match *self {
            HyperParams::Rf {
                n_estimators,
                max_depth,
            } => Model::Forest(fit_forest(x, y, n_estimators, max_depth, seed)?),
            HyperParams::Dt {
                max_features,
                max_depth,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Model::Tree(fit_tree(x, y, max_depth, max_features, &mut rng)?)
            }
            HyperParams::Lr { normalize } => Model::Linear(fit_linear(x, y, normalize)?),
        })
    }

    /// Compact JSON form used in reports.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("hyperparameters serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Tree(DecisionTree),
    Forest(ForestModel),
    Linear(LinearModel),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Tree(t) => t.predict(x),
            Model::Forest(f) => f.predict(x),
            Model::Linear(l) => l.predict(x),
        }
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Difficulty,
    Discrimination,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Difficulty => "difficulty",
            Target::Discrimination => "discrimination",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "difficulty" => Ok(Target::Difficulty),
            "discrimination" => Ok(Target::Discrimination),
            _ => Err(Error::Parse(format!("unknown target {s:?}"))),
        }
    }
}

/// A persisted model plus everything needed to reuse it on new questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRegressor {
    pub target: Target,
    pub hyperparams: HyperParams,
    pub seed: u64,
    pub encoding: Encoding,
    pub n_w: usize,
    pub vocabulary_fingerprint: String,
    pub model: Model,
}

impl TrainedRegressor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.model.predict(x)
    }
}

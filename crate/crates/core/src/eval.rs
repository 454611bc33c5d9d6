//! Experimental protocol: dataset splits, cross-validated model selection,
//! regression and classification metrics, and the performance-prediction
//! experiments.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irt::{predict_with_skill_side_channel, IrtConfig, PredictionTrace, SequenceStep};
use crate::regress::HyperParams;
use crate::textpipe::{featurize, Encoding};
use crate::types::{InteractionLog, Interval, ItemId, ItemParams, Question, QuestionBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub interaction_split_ratio: f64,
    pub question_split_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            interaction_split_ratio: 0.7,
            question_split_ratio: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for r in [self.interaction_split_ratio, self.question_split_ratio] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "split ratio {r} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDatasets {
    /// Interactions for ground-truth calibration.
    pub ds_gte: InteractionLog,
    /// Held-out interactions for performance prediction.
    pub ds_val: InteractionLog,
    /// Questions used to train the text regressors.
    pub ds_train: Vec<ItemId>,
    /// Questions whose traits are estimated from text.
    pub ds_test: Vec<ItemId>,
}

impl ExperimentDatasets {
    pub fn test_set(&self) -> HashSet<ItemId> {
        self.ds_test.iter().cloned().collect()
    }

    pub fn train_set(&self) -> HashSet<ItemId> {
        self.ds_train.iter().cloned().collect()
    }
}

/// Floor of `ratio * n`, guarded against representation error.
fn ratio_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Two independent splits: per-item interactions into GTE/VAL (every item
/// keeps at least one GTE interaction) and question ids into TRAIN/TEST.
pub fn split_experiment(
    log: &InteractionLog,
    bank: &QuestionBank,
    spec: &SplitSpec,
) -> Result<ExperimentDatasets> {
    spec.validate()?;
    log.check_against(bank)?;

    let mut by_item: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in log.records.iter().enumerate() {
        by_item.entry(r.item_id.as_str()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut in_gte = vec![false; log.len()];
    for item in bank.item_ids() {
        let mut idx = by_item.remove(item.as_str()).unwrap_or_default();
        if idx.len() < 2 {
            return Err(Error::InsufficientInteractions {
                item_id: item.clone(),
                count: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let n_gte = ratio_count(spec.interaction_split_ratio, idx.len()).max(1);
        for &i in &idx[..n_gte] {
            in_gte[i] = true;
        }
    }
    let (gte, val): (Vec<_>, Vec<_>) = log.records.iter().zip(&in_gte).partition(|(_, &g)| g);

    let mut qrng = ChaCha8Rng::seed_from_u64(spec.seed);
    qrng.set_stream(1);
    let mut ids: Vec<ItemId> = bank.item_ids().cloned().collect();
    ids.shuffle(&mut qrng);
    let n_train = ratio_count(spec.question_split_ratio, ids.len()).clamp(1, ids.len().max(2) - 1);
    let ds_test = ids.split_off(n_train.min(ids.len()));

    Ok(ExperimentDatasets {
        ds_gte: InteractionLog::new(gte.into_iter().map(|(r, _)| r.clone()).collect()),
        ds_val: InteractionLog::new(val.into_iter().map(|(r, _)| r.clone()).collect()),
        ds_train: ids,
        ds_test,
    })
}

/// Shuffles `0..n` once and cuts it into `k` near-equal folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig("k must be >= 2".into()));
    }
    if k > n {
        return Err(Error::TooFewRows { k, rows: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k)
        .map(|f| idx[f * n / k..(f + 1) * n / k].to_vec())
        .collect())
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> f64 {
    y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y_true.len() as f64
}

/// Population variance.
pub fn variance(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub hyperparams: HyperParams,
    pub fold_mses: Vec<f64>,
    pub mean_cv_mse: f64,
}

fn take_rows<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Mean held-out MSE of every config over the same folds, in config order.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[f64],
    configs: &[HyperParams],
    folds: &[Vec<usize>],
    seed: u64,
) -> Result<Vec<CvScore>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = (0..folds.len())
        .map(|f| {
            let train = folds
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .collect();
            (train, &folds[f])
        })
        .collect();
    configs
        .par_iter()
        .map(|hp| {
            let fold_mses = splits
                .iter()
                .map(|(train, test)| {
                    let model = hp.fit(&take_rows(x, train), &take_rows(y, train), seed)?;
                    let pred = model.predict_rows(&take_rows(x, test))?;
                    Ok(mse(&take_rows(y, test), &pred))
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean_cv_mse = fold_mses.iter().sum::<f64>() / fold_mses.len() as f64;
            Ok(CvScore {
                hyperparams: *hp,
                fold_mses,
                mean_cv_mse,
            })
        })
        .collect()
}

/// The search space: every model config is tried with every encoding and
/// vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub models: Vec<HyperParams>,
    pub encodings: Vec<Encoding>,
    pub n_ws: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            models: HyperParams::default_grid(),
            encodings: Encoding::ALL.to_vec(),
            n_ws: vec![100, 250, 500, 800, 1000, 2000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub hyperparams: HyperParams,
    pub encoding: Encoding,
    pub n_w: usize,
    pub fold_mses: Vec<f64>,
    pub mean_cv_mse: f64,
}

/// k-fold grid search over texts and targets. The corpus is re-featurized
/// for every (encoding, n_w); results are sorted by mean CV MSE, ties kept
/// in config order.
pub fn kfold_grid_search(
    questions: &[&Question],
    targets: &[f64],
    grid: &GridSpec,
    k: usize,
    seed: u64,
) -> Result<Vec<GridResult>> {
    if questions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: questions.len(),
            got: targets.len(),
        });
    }
    let folds = kfold_indices(questions.len(), k, seed)?;
    let mut results = Vec::new();
    for &encoding in &grid.encodings {
        for &n_w in &grid.n_ws {
            let fm = featurize(questions.iter().copied(), encoding, n_w)?;
            for score in cross_validate(&fm.rows, targets, &grid.models, &folds, seed)? {
                results.push(GridResult {
                    hyperparams: score.hyperparams,
                    encoding,
                    n_w,
                    fold_mses: score.fold_mses,
                    mean_cv_mse: score.mean_cv_mse,
                });
            }
        }
    }
    results.sort_by(|a, b| a.mean_cv_mse.total_cmp(&b.mean_cv_mse));
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub relative_rmse: f64,
    pub relative_mae: f64,
    pub trait_range: Interval,
}

impl RegressionMetrics {
    /// Relative errors against `range` for already computed RMSE and MAE.
    pub fn from_errors(rmse: f64, mae: f64, range: Interval) -> Result<Self> {
        let range = Interval::new(range.lo, range.hi)?;
        Ok(Self {
            mse: rmse * rmse,
            rmse,
            mae,
            relative_rmse: rmse / range.width(),
            relative_mae: mae / range.width(),
            trait_range: range,
        })
    }
}

pub fn regression_metrics(
    y_true: &[f64],
    y_pred: &[f64],
    trait_range: Interval,
) -> Result<RegressionMetrics> {
    if y_true.is_empty() {
        return Err(Error::Empty("targets"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let m = mse(y_true, y_pred);
    let mae = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / y_true.len() as f64;
    let mut out = RegressionMetrics::from_errors(m.sqrt(), mae, trait_range)?;
    out.mse = m;
    Ok(out)
}

/// Confusion-matrix metrics with "correct answer" as the positive class.
/// Undefined ratios (a class never predicted, or never observed) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision_correct: Option<f64>,
    pub recall_correct: Option<f64>,
    pub precision_wrong: Option<f64>,
    pub recall_wrong: Option<f64>,
    pub n: usize,
    pub true_correct: usize,
    pub true_wrong: usize,
    pub false_correct: usize,
    pub false_wrong: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_report(trace: &PredictionTrace) -> Result<ClassificationReport> {
    if trace.is_empty() {
        return Err(Error::Empty("prediction trace"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for s in &trace.steps {
        match (s.predicted_correct, s.actual_correct) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = trace.len();
    Ok(ClassificationReport {
        accuracy: (tp + tn) as f64 / n as f64,
        precision_correct: ratio(tp, tp + fp),
        recall_correct: ratio(tp, tp + fn_),
        precision_wrong: ratio(tn, tn + fn_),
        recall_wrong: ratio(tn, tn + fp),
        n,
        true_correct: tp,
        true_wrong: tn,
        false_correct: fp,
        false_wrong: fn_,
    })
}

/// The more frequent outcome among `training_actuals`; ties predict correct.
pub fn majority_class(training_actuals: &[bool]) -> Result<bool> {
    if training_actuals.is_empty() {
        return Err(Error::Empty("training answers"));
    }
    let correct = training_actuals.iter().filter(|&&c| c).count();
    Ok(2 * correct >= training_actuals.len())
}

/// Replaces every prediction in `trace` with the majority class of
/// `training_actuals`; the probability column carries the training correct
/// rate.
pub fn majority_baseline(
    training_actuals: &[bool],
    trace: &PredictionTrace,
) -> Result<PredictionTrace> {
    let class = majority_class(training_actuals)?;
    let rate =
        training_actuals.iter().filter(|&&c| c).count() as f64 / training_actuals.len() as f64;
    Ok(PredictionTrace {
        steps: trace
            .steps
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.predicted_probability = rate;
                s.predicted_correct = class;
                s
            })
            .collect(),
    })
}

/// Item parameter lookup used by the prediction experiments.
pub type ParamSource<'a> = dyn Fn(&str) -> Option<ItemParams> + Sync + 'a;
type ItemFilter<'a> = dyn Fn(&str) -> bool + Sync + 'a;

/// Runs sequential prediction for every student in `log` (time-ordered per
/// student, students in first-appearance order). Steps on items rejected by
/// `update` are skipped; only steps accepted by `evaluate` are recorded.
pub fn sequential_prediction(
    log: &InteractionLog,
    params: &ParamSource<'_>,
    update: &ItemFilter<'_>,
    evaluate: &ItemFilter<'_>,
    config: &IrtConfig,
    threshold: f64,
) -> Result<PredictionTrace> {
    let sequences = log.sequences_by_student();
    let traces: Vec<PredictionTrace> = sequences
        .par_iter()
        .map(|(_, seq)| {
            let steps: Vec<SequenceStep> = seq
                .iter()
                .filter(|r| update(&r.item_id))
                .map(|r| {
                    let p = params(&r.item_id).ok_or_else(|| Error::MissingParams {
                        kind: "item",
                        id: r.item_id.clone(),
                    })?;
                    Ok(SequenceStep {
                        item_id: r.item_id.clone(),
                        params: p,
                        correct: r.correct,
                        timestamp: Some(r.timestamp),
                    })
                })
                .collect::<Result<_>>()?;
            let upd = vec![true; steps.len()];
            let ev: Vec<bool> = steps.iter().map(|s| evaluate(&s.item_id)).collect();
            predict_with_skill_side_channel(&steps, &upd, &ev, config, threshold)
        })
        .collect::<Result<_>>()?;
    let mut out = PredictionTrace::default();
    for t in traces {
        out.extend(t);
    }
    Ok(out)
}

/// Only test items are seen: they drive both skill updates and evaluation.
pub fn experiment_test_only(
    ds_val: &InteractionLog,
    test_items: &HashSet<ItemId>,
    source: &ParamSource<'_>,
    config: &IrtConfig,
    threshold: f64,
) -> Result<PredictionTrace> {
    let is_test = |id: &str| test_items.contains(id);
    sequential_prediction(ds_val, source, &is_test, &is_test, config, threshold)
}

/// Every item updates the skill (calibrated items with their known
/// parameters, test items with `source`); only test items are evaluated.
pub fn experiment_mixed(
    ds_val: &InteractionLog,
    test_items: &HashSet<ItemId>,
    calibrated: &ParamSource<'_>,
    source: &ParamSource<'_>,
    config: &IrtConfig,
    threshold: f64,
) -> Result<PredictionTrace> {
    let params = |id: &str| {
        if test_items.contains(id) {
            source(id)
        } else {
            calibrated(id)
        }
    };
    let is_test = |id: &str| test_items.contains(id);
    sequential_prediction(ds_val, &params, &|_| true, &is_test, config, threshold)
}

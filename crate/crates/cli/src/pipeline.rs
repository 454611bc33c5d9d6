//! Protocol stages and the end-to-end pipeline.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::info;
use qtraits_core::eval::{
    classification_report, experiment_mixed, experiment_test_only, kfold_grid_search,
    majority_baseline, regression_metrics, split_experiment, ClassificationReport,
    ExperimentDatasets, GridResult, GridSpec, RegressionMetrics,
};
use qtraits_core::io::{self, CalibrationFile};
use qtraits_core::irt::calibrate;
use qtraits_core::textpipe::{featurize, featurize_with, FeatureMatrix};
use qtraits_core::types::{filter_first_timers, filter_min_support};
use qtraits_core::{
    Encoding, Error, HyperParams, InteractionLog, IrtConfig, ItemId, ItemParamMap, ItemParams,
    PredictionTrace, Question, QuestionBank, Target, TrainedRegressor, Vocabulary,
};
use serde::{Deserialize, Serialize};

use crate::{CliResult, RunConfig, RunDir};

/// First attempts only, then items with enough distinct students.
pub fn filter_log(log: &InteractionLog, min_students: usize) -> InteractionLog {
    filter_min_support(&filter_first_timers(log), min_students)
}

/// The questions that appear in `log`, in bank order. Interactions on items
/// missing from the bank are an error.
pub fn restrict_bank(bank: &QuestionBank, log: &InteractionLog) -> CliResult<QuestionBank> {
    log.check_against(bank)?;
    let used: HashSet<ItemId> = log.item_ids().into_iter().collect();
    Ok(bank.subset(&used))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub train: Vec<ItemId>,
    pub test: Vec<ItemId>,
}

impl From<&ExperimentDatasets> for SplitFile {
    fn from(ds: &ExperimentDatasets) -> Self {
        Self {
            train: ds.ds_train.clone(),
            test: ds.ds_test.clone(),
        }
    }
}

fn questions<'a>(bank: &'a QuestionBank, ids: &[ItemId]) -> CliResult<Vec<&'a Question>> {
    ids.iter()
        .map(|id| {
            bank.get(id)
                .ok_or_else(|| Error::UnknownItem(id.clone()).into())
        })
        .collect()
}

pub fn target_values(ids: &[ItemId], params: &ItemParamMap, target: Target) -> CliResult<Vec<f64>> {
    ids.iter()
        .map(|id| {
            let p = params.get(id).ok_or_else(|| Error::MissingParams {
                kind: "item",
                id: id.clone(),
            })?;
            Ok(match target {
                Target::Difficulty => p.difficulty,
                Target::Discrimination => p.discrimination,
            })
        })
        .collect()
}

/// Cross-validated grid search of text regressors for one trait.
pub fn select_model(
    bank: &QuestionBank,
    train_ids: &[ItemId],
    calibrated: &ItemParamMap,
    target: Target,
    grid: &GridSpec,
    k: usize,
    seed: u64,
) -> CliResult<Vec<GridResult>> {
    let qs = questions(bank, train_ids)?;
    let y = target_values(train_ids, calibrated, target)?;
    Ok(kfold_grid_search(&qs, &y, grid, k, seed)?)
}

/// Selected configuration for one trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub hyperparams: HyperParams,
    pub encoding: Encoding,
    pub n_w: usize,
}

impl From<&GridResult> for ModelChoice {
    fn from(r: &GridResult) -> Self {
        Self {
            hyperparams: r.hyperparams,
            encoding: r.encoding,
            n_w: r.n_w,
        }
    }
}

pub struct Trained {
    pub regressor: TrainedRegressor,
    pub features: FeatureMatrix,
}

/// Fits the chosen configuration on all training questions.
pub fn train(
    bank: &QuestionBank,
    train_ids: &[ItemId],
    calibrated: &ItemParamMap,
    target: Target,
    choice: ModelChoice,
    seed: u64,
) -> CliResult<Trained> {
    let qs = questions(bank, train_ids)?;
    let y = target_values(train_ids, calibrated, target)?;
    let features = featurize(qs, choice.encoding, choice.n_w)?;
    let model = choice.hyperparams.fit(&features.rows, &y, seed)?;
    Ok(Trained {
        regressor: TrainedRegressor {
            target,
            hyperparams: choice.hyperparams,
            seed,
            encoding: choice.encoding,
            n_w: choice.n_w,
            vocabulary_fingerprint: features.vocabulary.fingerprint(),
            model,
        },
        features,
    })
}

fn predict_trait(
    qs: &[&Question],
    regressor: &TrainedRegressor,
    vocabulary: &Vocabulary,
) -> CliResult<Vec<f64>> {
    if vocabulary.fingerprint() != regressor.vocabulary_fingerprint {
        return Err(Error::IdMismatch(format!(
            "{} model was trained against a different vocabulary",
            regressor.target
        ))
        .into());
    }
    let fm = featurize_with(qs.iter().copied(), regressor.encoding, vocabulary);
    Ok(regressor.model.predict_rows(&fm.rows)?)
}

/// Text-estimated traits of `ids`, clipped to the calibration bounds.
pub fn estimate(
    bank: &QuestionBank,
    ids: &[ItemId],
    difficulty: (&TrainedRegressor, &Vocabulary),
    discrimination: (&TrainedRegressor, &Vocabulary),
    irt: &IrtConfig,
) -> CliResult<ItemParamMap> {
    for (r, want) in [
        (difficulty.0, Target::Difficulty),
        (discrimination.0, Target::Discrimination),
    ] {
        if r.target != want {
            return Err(crate::CliError::Usage(format!(
                "expected a {want} model, got a {} model",
                r.target
            )));
        }
    }
    let qs = questions(bank, ids)?;
    let b = predict_trait(&qs, difficulty.0, difficulty.1)?;
    let a = predict_trait(&qs, discrimination.0, discrimination.1)?;
    Ok(ids
        .iter()
        .zip(a.into_iter().zip(b))
        .map(|(id, (a, b))| {
            (
                id.clone(),
                ItemParams::new(irt.a_bounds.clamp(a), irt.b_bounds.clamp(b)),
            )
        })
        .collect())
}

/// Regression metrics of text estimates against calibrated traits.
pub fn trait_metrics(
    calibrated: &ItemParamMap,
    estimated: &ItemParamMap,
    irt: &IrtConfig,
) -> CliResult<BTreeMap<Target, RegressionMetrics>> {
    let ids: Vec<ItemId> = estimated.keys().cloned().collect();
    let mut out = BTreeMap::new();
    for (target, range) in [
        (Target::Difficulty, irt.b_bounds),
        (Target::Discrimination, irt.a_bounds),
    ] {
        let truth = target_values(&ids, calibrated, target)?;
        let pred = target_values(&ids, estimated, target)?;
        out.insert(target, regression_metrics(&truth, &pred, range)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Only test questions are seen, for updates and evaluation.
    TestOnly,
    /// All questions update the skill, test questions are evaluated.
    Mixed,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::TestOnly => "test_only",
            Experiment::Mixed => "mixed",
        }
    }
}

/// Sequential prediction on `ds_val` with test-item parameters from
/// `source`; in the mixed experiment other items use `calibrated`.
pub fn predict(
    experiment: Experiment,
    ds_val: &InteractionLog,
    test_items: &HashSet<ItemId>,
    calibrated: &ItemParamMap,
    source: &ItemParamMap,
    irt: &IrtConfig,
    threshold: f64,
) -> CliResult<PredictionTrace> {
    let src = |id: &str| source.get(id).copied();
    let cal = |id: &str| calibrated.get(id).copied();
    Ok(match experiment {
        Experiment::TestOnly => experiment_test_only(ds_val, test_items, &src, irt, threshold)?,
        Experiment::Mixed => experiment_mixed(ds_val, test_items, &cal, &src, irt, threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub converged: bool,
    pub rounds: usize,
    pub final_log_likelihood: f64,
    pub extreme_items: usize,
    pub extreme_students: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedModel {
    #[serde(flatten)]
    pub choice: ModelChoice,
    pub mean_cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_interactions: usize,
    pub n_questions: usize,
    pub ds_gte: usize,
    pub ds_val: usize,
    pub ds_train: usize,
    pub ds_test: usize,
    pub calibration: CalibrationSummary,
    pub selected: BTreeMap<Target, SelectedModel>,
    pub regression: BTreeMap<Target, RegressionMetrics>,
    pub majority_class_correct: bool,
    pub threshold: f64,
    /// experiment -> trait source (irt, text, majority) -> report
    pub performance: BTreeMap<String, BTreeMap<String, ClassificationReport>>,
}

fn json_to(dir: &mut RunDir, rel: &str, value: &impl Serialize) -> CliResult<()> {
    io::write_json(&dir.file(rel)?, value)?;
    Ok(())
}

/// Runs every stage, writing all artifacts into `dir`.
pub fn run_pipeline(cfg: &RunConfig, dir: &mut RunDir) -> CliResult<PipelineReport> {
    cfg.validate()?;
    let (ipath, qpath) = cfg.require_inputs()?;
    json_to(dir, "config.json", cfg)?;

    let raw = io::load_interactions(ipath)?;
    let bank = io::load_questions(qpath)?;
    let log = filter_log(&raw, cfg.min_students);
    let bank = restrict_bank(&bank, &log)?;
    io::save_interactions(&dir.file("interactions_filtered.csv")?, &log)?;
    info!(
        "{} interactions on {} questions after filtering",
        log.len(),
        bank.len()
    );

    let ds = split_experiment(&log, &bank, &cfg.split)?;
    io::save_interactions(&dir.file("ds_gte.csv")?, &ds.ds_gte)?;
    io::save_interactions(&dir.file("ds_val.csv")?, &ds.ds_val)?;
    json_to(dir, "split.json", &SplitFile::from(&ds))?;

    let cal = calibrate(&ds.ds_gte, &cfg.irt)?;
    json_to(dir, "calibration.json", &CalibrationFile::from(&cal))?;
    info!(
        "calibration: {} rounds, converged = {}",
        cal.rounds_used, cal.converged
    );

    let grid = cfg.effective_grid();
    let mut selected = BTreeMap::new();
    let mut trained = BTreeMap::new();
    for target in [Target::Difficulty, Target::Discrimination] {
        let name = target.as_str();
        let results = select_model(
            &bank,
            &ds.ds_train,
            &cal.item_params,
            target,
            &grid,
            cfg.k_folds,
            cfg.seed,
        )?;
        io::save_grid_report(&dir.file(&format!("{name}/grid.csv"))?, &results)?;
        let best = &results[0];
        info!(
            "{name}: selected {} (cv mse {:.4})",
            best.hyperparams.to_json(),
            best.mean_cv_mse
        );
        let t = train(
            &bank,
            &ds.ds_train,
            &cal.item_params,
            target,
            best.into(),
            cfg.seed,
        )?;
        io::save_vocabulary(
            &dir.file(&format!("{name}/vocabulary.json"))?,
            &t.features.vocabulary,
        )?;
        io::save_features(
            &dir.file(&format!("{name}/features_train.csv"))?,
            &t.features,
        )?;
        json_to(dir, &format!("{name}/model.json"), &t.regressor)?;
        selected.insert(
            target,
            SelectedModel {
                choice: best.into(),
                mean_cv_mse: best.mean_cv_mse,
            },
        );
        trained.insert(target, t);
    }

    let d = &trained[&Target::Difficulty];
    let a = &trained[&Target::Discrimination];
    let estimated = estimate(
        &bank,
        &ds.ds_test,
        (&d.regressor, &d.features.vocabulary),
        (&a.regressor, &a.features.vocabulary),
        &cfg.irt,
    )?;
    json_to(dir, "estimated_traits.json", &estimated)?;
    let regression = trait_metrics(&cal.item_params, &estimated, &cfg.irt)?;
    json_to(dir, "regression_metrics.json", &regression)?;

    let training_answers: Vec<bool> = ds.ds_gte.iter().map(|r| r.correct).collect();
    let majority_class_correct = qtraits_core::eval::majority_class(&training_answers)?;
    let test_items = ds.test_set();
    let mut performance = BTreeMap::new();
    for experiment in [Experiment::TestOnly, Experiment::Mixed] {
        let ename = experiment.as_str();
        let irt_trace = predict(
            experiment,
            &ds.ds_val,
            &test_items,
            &cal.item_params,
            &cal.item_params,
            &cfg.irt,
            cfg.threshold,
        )?;
        let text_trace = predict(
            experiment,
            &ds.ds_val,
            &test_items,
            &cal.item_params,
            &estimated,
            &cfg.irt,
            cfg.threshold,
        )?;
        let majority_trace = majority_baseline(&training_answers, &irt_trace)?;
        let mut reports = BTreeMap::new();
        for (source, trace) in [
            ("irt", &irt_trace),
            ("text", &text_trace),
            ("majority", &majority_trace),
        ] {
            io::save_trace(&dir.file(&format!("traces/{ename}_{source}.csv"))?, trace)?;
            reports.insert(source.to_string(), classification_report(trace)?);
        }
        performance.insert(ename.to_string(), reports);
    }

    let report = PipelineReport {
        n_interactions: log.len(),
        n_questions: bank.len(),
        ds_gte: ds.ds_gte.len(),
        ds_val: ds.ds_val.len(),
        ds_train: ds.ds_train.len(),
        ds_test: ds.ds_test.len(),
        calibration: CalibrationSummary {
            converged: cal.converged,
            rounds: cal.rounds_used,
            final_log_likelihood: *cal.log_likelihood_trace.last().expect("trace"),
            extreme_items: cal.extreme_items.len(),
            extreme_students: cal.extreme_students.len(),
        },
        selected,
        regression,
        majority_class_correct,
        threshold: cfg.threshold,
        performance,
    };
    json_to(dir, "report.json", &report)?;
    Ok(report)
}

/// Reads a trained model and its vocabulary.
pub fn load_model(model: &Path, vocabulary: &Path) -> CliResult<(TrainedRegressor, Vocabulary)> {
    Ok((io::read_json(model)?, io::load_vocabulary(vocabulary)?))
}

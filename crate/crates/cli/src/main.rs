use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qtraits_cli::pipeline::{self, Experiment, ModelChoice, SplitFile};
use qtraits_cli::{CliError, CliResult, RunConfig, RunDir};
use qtraits_core::eval::{classification_report, majority_baseline, split_experiment};
use qtraits_core::io::{self, CalibrationFile};
use qtraits_core::irt::calibrate;
use qtraits_core::synth::{generate, SynthConfig};
use qtraits_core::textpipe::{featurize, featurize_with};
use qtraits_core::{Encoding, HyperParams, ItemId, ItemParamMap, Target};

#[derive(Parser)]
#[command(
    name = "qtraits",
    version,
    about = "Estimate question difficulty and discrimination from text"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic question bank and interaction log.
    Simulate(SimulateArgs),
    /// Keep first attempts on items with enough distinct students.
    Filter(FilterArgs),
    /// Split interactions (GTE/VAL) and questions (TRAIN/TEST).
    Split(SplitArgs),
    /// Calibrate item and student parameters.
    Calibrate(CalibrateArgs),
    /// Build a vocabulary and TF-IDF feature matrix.
    Featurize(FeaturizeArgs),
    /// Cross-validated grid search of text regressors.
    SelectModel(SelectArgs),
    /// Train a text regressor for one trait.
    Train(TrainArgs),
    /// Estimate traits of questions from their text.
    Estimate(EstimateArgs),
    /// Sequential performance prediction.
    Predict(PredictArgs),
    /// Metrics from a prediction trace or from estimated traits.
    Report(ReportArgs),
    /// Run every stage into one run directory.
    Pipeline(PipelineArgs),
}

/// Flags mirroring `RunConfig`; they override values from `--config`.
#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for splits, folds and model fitting.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    grid_resolution: Option<usize>,
    #[arg(long)]
    item_grid_resolution: Option<usize>,
    #[arg(long)]
    interaction_split_ratio: Option<f64>,
    #[arg(long)]
    question_split_ratio: Option<f64>,
    /// Restrict the grid to one encoding.
    #[arg(long, value_enum)]
    encoding: Option<EncodingArg>,
    /// Restrict the grid to one vocabulary size.
    #[arg(long)]
    n_w: Option<usize>,
    /// Restrict the grid to these model families.
    #[arg(long, value_enum, value_delimiter = ',')]
    models: Vec<Family>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    min_students: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum EncodingArg {
    QuestionOnly,
    QuestionCorrect,
    QuestionFull,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::QuestionOnly => Encoding::QuestionOnly,
            EncodingArg::QuestionCorrect => Encoding::QuestionCorrect,
            EncodingArg::QuestionFull => Encoding::QuestionFull,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Family {
    Rf,
    Dt,
    Lr,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Difficulty,
    Discrimination,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Difficulty => Target::Difficulty,
            TargetArg::Discrimination => Target::Discrimination,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    TestOnly,
    Mixed,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Subset {
    All,
    Train,
    Test,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.split.seed = s;
        }
        let irt = &mut cfg.irt;
        set(&mut irt.max_rounds, self.max_rounds);
        set(&mut irt.tolerance, self.tolerance);
        set(&mut irt.grid_resolution, self.grid_resolution);
        set(&mut irt.item_grid_resolution, self.item_grid_resolution);
        set(
            &mut cfg.split.interaction_split_ratio,
            self.interaction_split_ratio,
        );
        set(
            &mut cfg.split.question_split_ratio,
            self.question_split_ratio,
        );
        if let Some(e) = self.encoding {
            cfg.encoding = Some(e.into());
        }
        if self.n_w.is_some() {
            cfg.n_w = self.n_w;
        }
        if !self.models.is_empty() {
            cfg.grid.models.retain(|hp| {
                let family = match hp {
                    HyperParams::Rf { .. } => Family::Rf,
                    HyperParams::Dt { .. } => Family::Dt,
                    HyperParams::Lr { .. } => Family::Lr,
                };
                self.models.contains(&family)
            });
        }
        set(&mut cfg.k_folds, self.k_folds);
        set(&mut cfg.min_students, self.min_students);
        set(&mut cfg.threshold, self.threshold);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON synthetic-data configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the planted-signal preset with this difficulty delta.
    #[arg(long)]
    planted: Option<f64>,
    #[arg(long)]
    n_students: Option<usize>,
    #[arg(long)]
    n_items: Option<usize>,
    #[arg(long)]
    answers_per_item: Option<usize>,
    #[arg(long)]
    base_text_length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_students: usize,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    questions: PathBuf,
    /// Output directory for ds_gte.csv, ds_val.csv and split.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    questions: PathBuf,
    /// Output directory for vocabulary.json and features.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "question-only")]
    encoding: EncodingArg,
    #[arg(long, default_value_t = 1000)]
    n_w: usize,
    /// Weight against an existing vocabulary instead of building one.
    #[arg(long)]
    vocabulary: Option<PathBuf>,
    #[command(flatten)]
    items: ItemSelection,
}

#[derive(Args)]
struct ItemSelection {
    /// split.json restricting the questions used.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    subset: Subset,
}

impl ItemSelection {
    fn ids(&self, bank: &qtraits_core::QuestionBank, default: Subset) -> CliResult<Vec<ItemId>> {
        let subset = if self.subset == Subset::All {
            default
        } else {
            self.subset
        };
        match (&self.split, subset) {
            (_, Subset::All) | (None, _) => Ok(bank.item_ids().cloned().collect()),
            (Some(p), s) => {
                let split: SplitFile = io::read_json(p)?;
                Ok(if s == Subset::Train {
                    split.train
                } else {
                    split.test
                })
            }
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Grid report CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    target: TargetArg,
    /// Grid report whose best row is trained.
    #[arg(long, conflicts_with = "params")]
    grid: Option<PathBuf>,
    /// Hyperparameters as JSON, e.g. '{"model":"rf","n_estimators":100,"max_depth":10}'.
    #[arg(long, requires = "n_w")]
    params: Option<String>,
    /// Output directory for model.json and vocabulary.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Directory with the difficulty model.json and vocabulary.json.
    #[arg(long)]
    difficulty_model: PathBuf,
    /// Directory with the discrimination model.json and vocabulary.json.
    #[arg(long)]
    discrimination_model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Validation interactions.
    #[arg(long)]
    interactions: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    /// Text-estimated traits for the test questions; calibrated ones when absent.
    #[arg(long)]
    estimated: Option<PathBuf>,
    /// Predict the majority class of these training interactions instead.
    #[arg(long, conflicts_with = "estimated")]
    majority_from: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test-only")]
    experiment: ExperimentArg,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Prediction trace CSV.
    #[arg(long, required_unless_present = "estimated")]
    trace: Option<PathBuf>,
    /// Estimated traits JSON, compared with --calibration.
    #[arg(long, requires = "calibration", conflicts_with = "trace")]
    estimated: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output JSON (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    interactions: Option<PathBuf>,
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Run directory (must be empty or absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Runs `body` with a tracked output directory; everything written is
/// removed when it fails.
fn with_outputs<T>(
    root: &Path,
    fresh: bool,
    body: impl FnOnce(&mut RunDir) -> CliResult<T>,
) -> CliResult<T> {
    let mut dir = RunDir::open(root, fresh)?;
    match body(&mut dir) {
        Ok(v) => Ok(v),
        Err(e) => {
            dir.discard();
            Err(e)
        }
    }
}

/// Single-file outputs go through a `RunDir` rooted at their parent.
fn with_output_file<T>(path: &Path, body: impl FnOnce(&Path) -> CliResult<T>) -> CliResult<T> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    with_outputs(parent, false, |dir| {
        let p = dir.file(&name)?;
        body(&p)
    })
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg = match (&args.config, args.planted) {
        (Some(p), _) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| CliError::Usage(format!("synth config: {e}")))?,
        (None, Some(delta)) => SynthConfig::planted(delta),
        (None, None) => SynthConfig::default(),
    };
    set(&mut cfg.n_students, args.n_students);
    set(&mut cfg.n_items, args.n_items);
    set(&mut cfg.answers_per_item, args.answers_per_item);
    set(&mut cfg.base_text_length, args.base_text_length);
    set(&mut cfg.seed, args.seed);
    let truth = generate(&cfg)?;
    with_outputs(&args.out, false, |dir| {
        io::write_json(&dir.file("synth_config.json")?, &cfg)?;
        io::save_interactions(&dir.file("interactions.csv")?, &truth.log)?;
        io::save_questions(&dir.file("questions.jsonl")?, &truth.bank)?;
        io::write_json(&dir.file("truth.json")?, &truth.truth_file())?;
        Ok(())
    })
}

fn split(args: &SplitArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let log = io::load_interactions(&args.interactions)?;
    let bank = pipeline::restrict_bank(&io::load_questions(&args.questions)?, &log)?;
    let ds = split_experiment(&log, &bank, &cfg.split)?;
    with_outputs(&args.out, false, |dir| {
        io::save_interactions(&dir.file("ds_gte.csv")?, &ds.ds_gte)?;
        io::save_interactions(&dir.file("ds_val.csv")?, &ds.ds_val)?;
        io::write_json(&dir.file("split.json")?, &SplitFile::from(&ds))?;
        Ok(())
    })
}

fn calibrate_cmd(args: &CalibrateArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let log = io::load_interactions(&args.interactions)?;
    let cal = calibrate(&log, &cfg.irt)?;
    if !cal.converged {
        log::warn!("calibration did not converge in {} rounds", cal.rounds_used);
    }
    with_output_file(&args.out, |p| {
        Ok(io::write_json(p, &CalibrationFile::from(&cal))?)
    })
}

fn featurize_cmd(args: &FeaturizeArgs) -> CliResult<()> {
    let bank = io::load_questions(&args.questions)?;
    let ids = args.items.ids(&bank, Subset::All)?;
    let qs = ids
        .iter()
        .map(|id| {
            bank.get(id)
                .ok_or_else(|| qtraits_core::Error::UnknownItem(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fm = match &args.vocabulary {
        Some(v) => featurize_with(qs, args.encoding.into(), &io::load_vocabulary(v)?),
        None => featurize(qs, args.encoding.into(), args.n_w)?,
    };
    with_outputs(&args.out, false, |dir| {
        io::save_vocabulary(&dir.file("vocabulary.json")?, &fm.vocabulary)?;
        io::save_features(&dir.file("features.csv")?, &fm)?;
        Ok(())
    })
}

fn select_model(args: &SelectArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let bank = io::load_questions(&args.questions)?;
    let cal: CalibrationFile = io::read_json(&args.calibration)?;
    let split: SplitFile = io::read_json(&args.split)?;
    let results = pipeline::select_model(
        &bank,
        &split.train,
        &cal.items,
        args.target.into(),
        &cfg.effective_grid(),
        cfg.k_folds,
        cfg.seed,
    )?;
    with_output_file(&args.out, |p| Ok(io::save_grid_report(p, &results)?))
}

fn train_cmd(args: &TrainArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let choice = match (&args.grid, &args.params) {
        (Some(g), _) => {
            let rows = io::load_grid_report(g)?;
            let best = rows
                .first()
                .ok_or_else(|| CliError::Usage("grid report is empty".into()))?;
            ModelChoice::from(best)
        }
        (None, Some(json)) => ModelChoice {
            hyperparams: serde_json::from_str(json)
                .map_err(|e| CliError::Usage(format!("--params: {e}")))?,
            encoding: cfg.encoding.unwrap_or(Encoding::QuestionOnly),
            n_w: cfg.n_w.expect("clap requires --n-w"),
        },
        (None, None) => {
            return Err(CliError::Usage(
                "either --grid or --params is required".into(),
            ))
        }
    };
    let bank = io::load_questions(&args.questions)?;
    let cal: CalibrationFile = io::read_json(&args.calibration)?;
    let split: SplitFile = io::read_json(&args.split)?;
    let t = pipeline::train(
        &bank,
        &split.train,
        &cal.items,
        args.target.into(),
        choice,
        cfg.seed,
    )?;
    with_outputs(&args.out, false, |dir| {
        io::write_json(&dir.file("model.json")?, &t.regressor)?;
        io::save_vocabulary(&dir.file("vocabulary.json")?, &t.features.vocabulary)?;
        Ok(())
    })
}

fn estimate_cmd(args: &EstimateArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let bank = io::load_questions(&args.questions)?;
    let split: SplitFile = io::read_json(&args.split)?;
    let load = |d: &Path| pipeline::load_model(&d.join("model.json"), &d.join("vocabulary.json"));
    let (dm, dv) = load(&args.difficulty_model)?;
    let (am, av) = load(&args.discrimination_model)?;
    let est = pipeline::estimate(&bank, &split.test, (&dm, &dv), (&am, &av), &cfg.irt)?;
    with_output_file(&args.out, |p| Ok(io::write_json(p, &est)?))
}

fn predict_cmd(args: &PredictArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let ds_val = io::load_interactions(&args.interactions)?;
    let split: SplitFile = io::read_json(&args.split)?;
    let cal: CalibrationFile = io::read_json(&args.calibration)?;
    let source: ItemParamMap = match &args.estimated {
        Some(p) => io::read_json(p)?,
        None => cal.items.clone(),
    };
    let experiment = match args.experiment {
        ExperimentArg::TestOnly => Experiment::TestOnly,
        ExperimentArg::Mixed => Experiment::Mixed,
    };
    let test: HashSet<ItemId> = split.test.iter().cloned().collect();
    let mut trace = pipeline::predict(
        experiment,
        &ds_val,
        &test,
        &cal.items,
        &source,
        &cfg.irt,
        cfg.threshold,
    )?;
    if let Some(p) = &args.majority_from {
        let training: Vec<bool> = io::load_interactions(p)?
            .iter()
            .map(|r| r.correct)
            .collect();
        trace = majority_baseline(&training, &trace)?;
    }
    with_output_file(&args.out, |p| Ok(io::save_trace(p, &trace)?))
}

fn report_cmd(args: &ReportArgs) -> CliResult<()> {
    let cfg = args.cfg.resolve()?;
    let json = match (&args.trace, &args.estimated, &args.calibration) {
        (Some(t), _, _) => {
            serde_json::to_string_pretty(&classification_report(&io::load_trace(t)?)?)?
        }
        (None, Some(e), Some(c)) => {
            let est: ItemParamMap = io::read_json(e)?;
            let cal: CalibrationFile = io::read_json(c)?;
            serde_json::to_string_pretty(&pipeline::trait_metrics(&cal.items, &est, &cfg.irt)?)?
        }
        _ => {
            return Err(CliError::Usage(
                "--trace or --estimated with --calibration is required".into(),
            ))
        }
    };
    match &args.out {
        Some(p) => with_output_file(p, |p| Ok(std::fs::write(p, format!("{json}\n"))?)),
        None => say(&json),
    }
}

/// Writes one line to stdout; a closed pipe is not an error.
fn say(line: &str) -> CliResult<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn pipeline_cmd(args: &PipelineArgs) -> CliResult<()> {
    let mut cfg = args.cfg.resolve()?;
    if args.interactions.is_some() {
        cfg.interactions = args.interactions.clone();
    }
    if args.questions.is_some() {
        cfg.questions = args.questions.clone();
    }
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    let out = cfg.output_dir.clone();
    let report = with_outputs(&out, true, |dir| pipeline::run_pipeline(&cfg, dir))?;
    for (experiment, reports) in &report.performance {
        for (source, r) in reports {
            say(&format!(
                "{experiment:<10} {source:<9} accuracy {:.4}",
                r.accuracy
            ))?;
        }
    }
    say(&format!("artifacts in {}", out.display()))
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Filter(a) => {
            if a.min_students < 1 {
                return Err(CliError::Usage("--min-students must be >= 1".into()));
            }
            let log =
                pipeline::filter_log(&io::load_interactions(&a.interactions)?, a.min_students);
            with_output_file(&a.out, |p| Ok(io::save_interactions(p, &log)?))
        }
        Command::Split(a) => split(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::SelectModel(a) => select_model(a),
        Command::Train(a) => train_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.workers {
        Some(0) => Err(CliError::Usage("--workers must be >= 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(CliError::Usage(format!("thread pool: {e}"))),
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

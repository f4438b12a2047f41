//! Command-line surface: `synth`, `train`, `grade`, `evaluate`, `agreement`
//! and `grid`.
//!
//! Exit codes: 0 success, 1 validation (bad input, config or flags), 2 runtime
//! (I/O and the like). Run configuration is read from `--config` (JSON
//! mirroring [`RunConfig`]), then `RUBRICSCORE_<KEY>` environment variables,
//! then command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::corpus::{generate_synthetic_corpus, Corpus, DimensionMode, ScoreSkew, Split, SyntheticConfig};
use crate::error::{Error, Result};
use crate::grader::{HeadKind, LossKind};
use crate::metrics::{self, masi_alpha};
use crate::pipeline::{
    append_jsonl, grid_search, train_pipeline, Ablation, AblationResult, AssessmentModel, GridSpec, RunConfig,
    VerifierMode,
};
use crate::verifier::write_json;

pub const ENV_PREFIX: &str = "RUBRICSCORE_";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommandResult {
    pub exit_code: i32,
    pub artifacts_written: Vec<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "rubricscore", version, about = "Rubric-based assessment of lab reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus as JSONL.
    Synth(SynthArgs),
    /// Train verifier and grader and write a checkpoint.
    Train(TrainArgs),
    /// Score reports with a trained checkpoint.
    Grade(GradeArgs),
    /// Compute the metric suite on one split of a scored corpus.
    Evaluate(EvaluateArgs),
    /// Agreement between raters' sentence selections.
    Agreement(AgreementArgs),
    /// Hyperparameter grid search.
    Grid(GridArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Scored,
    Presence,
}

impl From<ModeArg> for DimensionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Scored => DimensionMode::Scored,
            ModeArg::Presence => DimensionMode::Presence,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SkewArg {
    Uniform,
    Polarized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Oll,
    Ce,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadArg {
    Shared,
    PerDimension,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerifierArg {
    Learned,
    Random,
    NoneTruncate,
    NoneMovingAvg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 250)]
    pub n_reports: usize,
    #[arg(long, default_value_t = 7)]
    pub n_dims: usize,
    #[arg(long, value_enum, default_value = "scored")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "polarized")]
    pub skew: SkewArg,
    #[arg(long)]
    pub out: PathBuf,
}

/// Flags that override [`RunConfig`] fields.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON file mirroring the run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    #[arg(long, value_enum)]
    pub verifier_mode: Option<VerifierArg>,
    /// Drop the full-report input from the grader.
    #[arg(long)]
    pub no_report: bool,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Train an ablated variant and append its test metrics to the ablation log.
    #[arg(long)]
    pub ablation: Option<String>,
    /// Defaults to ablations.jsonl next to the checkpoint directory.
    #[arg(long)]
    pub ablation_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL file with report records.
    #[arg(long)]
    pub input: PathBuf,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Feedback JSON (probabilities and selected sentences); defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    /// Must match the checkpoint mode when given.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Bootstrap resamples (0 disables intervals, otherwise at least 100).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Metrics JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-pair predictions CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// JSONL file with selection records.
    #[arg(long)]
    pub selections: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Leaderboard JSONL (appended).
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the winning configuration.
    #[arg(long)]
    pub best_config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub learning_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
}

/// Applies `RUBRICSCORE_<KEY>` overrides, with nested keys joined by `_`
/// (`RUBRICSCORE_ENCODER_EMBEDDING_DIM`). Values are parsed as JSON and fall
/// back to plain strings.
pub fn apply_env_overrides(config: RunConfig, lookup: impl Fn(&str) -> Option<String>) -> Result<RunConfig> {
    fn walk(value: &mut Value, prefix: &str, lookup: &dyn Fn(&str) -> Option<String>) {
        let Value::Object(map) = value else { return };
        for (key, field) in map.iter_mut() {
            let name = format!("{prefix}{}", key.to_uppercase());
            if field.is_object() {
                walk(field, &format!("{name}_"), lookup);
            } else if let Some(raw) = lookup(&name) {
                *field = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
            }
        }
    }
    let mut value = serde_json::to_value(&config)?;
    walk(&mut value, ENV_PREFIX, &lookup);
    serde_json::from_value(value).map_err(|e| Error::Config(format!("environment override: {e}")))
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg = apply_env_overrides(cfg, |k| std::env::var(k).ok())?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.loss {
        cfg.loss = match v {
            LossArg::Oll => LossKind::Oll,
            LossArg::Ce => LossKind::Ce,
        };
    }
    if let Some(v) = args.head {
        cfg.head = match v {
            HeadArg::Shared => HeadKind::Shared,
            HeadArg::PerDimension => HeadKind::PerDimension,
        };
    }
    if let Some(v) = args.verifier_mode {
        cfg.verifier_mode = match v {
            VerifierArg::Learned => VerifierMode::Learned,
            VerifierArg::Random => VerifierMode::Random,
            VerifierArg::NoneTruncate => VerifierMode::NoneTruncate,
            VerifierArg::NoneMovingAvg => VerifierMode::NoneMovingAvg,
        };
    }
    if args.no_report {
        cfg.include_report = false;
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::at_path(parent))?;
    }
    fs::write(path, text).map_err(Error::at_path(path))?;
    out.push(path.to_path_buf());
    Ok(())
}

fn cmd_synth(args: SynthArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut cfg = SyntheticConfig::new(args.seed, args.n_reports, args.n_dims);
    cfg.mode = args.mode.into();
    cfg.skew = match args.skew {
        SkewArg::Uniform => ScoreSkew::Uniform,
        SkewArg::Polarized => ScoreSkew::Polarized,
    };
    let corpus = generate_synthetic_corpus(&cfg)?;
    corpus.save(&args.out)?;
    out.push(args.out.clone());
    println!("wrote {} reports to {}", corpus.reports.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut cfg = resolve_config(&args.config)?;
    let ablation = args.ablation.as_deref().map(str::parse::<Ablation>).transpose()?;
    if let Some(a) = ablation {
        cfg = a.apply(&cfg);
        cfg.validate()?;
    }
    let corpus = Corpus::load(&args.corpus)?;
    let trained = train_pipeline(&corpus, &cfg)?;
    trained.save(&args.out_dir)?;
    out.push(args.out_dir.clone());
    let val_loss = trained.validation_loss();
    println!("final validation loss: {val_loss:.6}");
    if let Some(a) = ablation {
        let (_, metrics) = trained.model.evaluate_split(&corpus, Split::Test)?;
        let row = AblationResult {
            variant: a.name().to_string(),
            config: cfg,
            val_loss,
            metrics,
        };
        let log = args.ablation_log.clone().unwrap_or_else(|| {
            args.out_dir
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .join("ablations.jsonl")
        });
        append_jsonl(&log, &[row])?;
        out.push(log);
    }
    Ok(())
}

#[derive(Serialize)]
struct Feedback<'a, T: Serialize> {
    checkpoint: String,
    mode: &'static str,
    reports: &'a [T],
}

fn cmd_grade(args: GradeArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let model = AssessmentModel::load(&args.checkpoint)?;
    let mode = args.mode.map(DimensionMode::from).unwrap_or(model.config.mode);
    if mode != model.config.mode {
        return Err(Error::ModeMismatch {
            checkpoint: model.config.mode.as_str().into(),
            requested: mode.as_str().into(),
        });
    }
    let reports = Corpus::load_reports(&args.input)?;
    if reports.is_empty() {
        return Err(Error::Validation(format!(
            "{} holds no report records",
            args.input.display()
        )));
    }
    let dim_ids: Vec<&str> = model.rubric.dimensions.iter().map(|d| d.id.as_str()).collect();
    let mut header = vec!["report_id"];
    header.extend(&dim_ids);
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    let feedback_path = args.feedback.clone().unwrap_or_else(|| args.out.with_extension("json"));
    let feedback = match mode {
        DimensionMode::Scored => {
            header.push("total");
            csv_out.write_record(&header)?;
            let assessed = reports.iter().map(|r| model.assess(r)).collect::<Result<Vec<_>>>()?;
            for a in &assessed {
                let mut row = vec![a.report_id.clone()];
                row.extend(a.per_dimension.iter().map(|d| d.score.to_string()));
                row.push(a.total.to_string());
                csv_out.write_record(&row)?;
            }
            serde_json::to_string_pretty(&Feedback {
                checkpoint: args.checkpoint.display().to_string(),
                mode: mode.as_str(),
                reports: &assessed,
            })?
        }
        DimensionMode::Presence => {
            csv_out.write_record(&header)?;
            let results = reports
                .iter()
                .map(|r| model.assess_presence(r))
                .collect::<Result<Vec<_>>>()?;
            for p in &results {
                let mut row = vec![p.report_id.clone()];
                row.extend(p.present.iter().map(|b| b.to_string()));
                csv_out.write_record(&row)?;
            }
            serde_json::to_string_pretty(&Feedback {
                checkpoint: args.checkpoint.display().to_string(),
                mode: mode.as_str(),
                reports: &results,
            })?
        }
    };
    let bytes = csv_out
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_text(&args.out, &String::from_utf8_lossy(&bytes), out)?;
    write_text(&feedback_path, &feedback, out)?;
    println!("graded {} reports", reports.len());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let model = AssessmentModel::load(&args.checkpoint)?;
    let corpus = Corpus::load(&args.corpus)?;
    let (set, mut report) = model.evaluate_split(&corpus, args.split.into())?;
    if args.bootstrap > 0 {
        metrics::add_bootstrap(&set, &mut report, args.bootstrap, args.seed, args.level)?;
    }
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => write_text(path, &json, out)?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.predictions {
        metrics::write_predictions_csv(path, &set)?;
        out.push(path.clone());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RaterStats {
    pub rater_id: String,
    pub n_selections: usize,
    pub mean_set_size: f64,
    pub sd_set_size: f64,
}

#[derive(Debug, Serialize)]
pub struct AgreementSummary {
    pub alpha: f64,
    pub n_units: usize,
    pub raters: Vec<RaterStats>,
}

fn cmd_agreement(args: AgreementArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let selections = Corpus::load_selections(&args.selections)?;
    let alpha = masi_alpha(&selections)?;
    let mut sizes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in &selections {
        sizes
            .entry(s.rater_id.as_str())
            .or_default()
            .push(s.positions.len() as f64);
    }
    let raters = sizes
        .into_iter()
        .map(|(id, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            RaterStats {
                rater_id: id.to_string(),
                n_selections: v.len(),
                mean_set_size: mean,
                sd_set_size: var.sqrt(),
            }
        })
        .collect();
    let units: std::collections::BTreeSet<(&str, &str)> = selections
        .iter()
        .map(|s| (s.report_id.as_str(), s.dimension_id.as_str()))
        .collect();
    let summary = AgreementSummary {
        alpha,
        n_units: units.len(),
        raters,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    println!("{json}");
    if let Some(path) = &args.out {
        write_text(path, &json, out)?;
    }
    Ok(())
}

fn cmd_grid(args: GridArgs, out: &mut Vec<PathBuf>) -> Result<()> {
    let base = resolve_config(&args.config)?;
    let defaults = GridSpec::default();
    let grid = GridSpec {
        learning_rates: args.learning_rates.unwrap_or(defaults.learning_rates),
        batch_sizes: args.batch_sizes.unwrap_or(defaults.batch_sizes),
        alphas: args.alphas.unwrap_or(defaults.alphas),
        ks: args.ks.unwrap_or(defaults.ks),
    };
    let corpus = Corpus::load(&args.corpus)?;
    let result = grid_search(&corpus, &grid, &base)?;
    append_jsonl(&args.out, &result.leaderboard)?;
    out.push(args.out.clone());
    if let Some(path) = &args.best_config {
        write_json(path, &result.best)?;
        out.push(path.clone());
    }
    println!(
        "best of {} cells: lr={} batch={} alpha={} k={} (val loss {:.6})",
        grid.len(),
        result.best.learning_rate,
        result.best.batch_size,
        result.best.alpha,
        result.best.k,
        result.best_val_loss
    );
    Ok(())
}

pub fn execute(command: Command, artifacts: &mut Vec<PathBuf>) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, artifacts),
        Command::Train(a) => cmd_train(a, artifacts),
        Command::Grade(a) => cmd_grade(a, artifacts),
        Command::Evaluate(a) => cmd_evaluate(a, artifacts),
        Command::Agreement(a) => cmd_agreement(a, artifacts),
        Command::Grid(a) => cmd_grid(a, artifacts),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() {
        1
    } else {
        2
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return CommandResult {
                exit_code: if e.use_stderr() { 1 } else { 0 },
                artifacts_written: Vec::new(),
            };
        }
    };
    let mut artifacts = Vec::new();
    match execute(cli.command, &mut artifacts) {
        Ok(()) => CommandResult {
            exit_code: 0,
            artifacts_written: artifacts,
        },
        Err(e) => {
            eprintln!("error: {e}");
            CommandResult {
                exit_code: exit_code(&e),
                artifacts_written: artifacts,
            }
        }
    }
}

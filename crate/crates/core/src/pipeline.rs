//! Two-stage training, checkpoints, assessment, ablations and grid search.
//!
//! Stage one trains the verifier on `score > 0` labels. Stage two freezes it,
//! records the sentences it forwards for every (report, dimension) pair and
//! trains the grader on them. At assessment time a negative verifier decision
//! scores the dimension 0 without calling the grader.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, DimensionMode, Report, Rubric, Split};
use crate::encoder::{ProviderSettings, ReportStrategy};
use crate::error::{Error, Result};
use crate::grader::{train_grader, Grader, GraderConfig, HeadKind, InputSlots, LossKind, RelevantAggregation};
use crate::metrics::{self, EvaluationReport, PredictionEntry, PredictionSet};
use crate::optim::{TrainingLog, TrainingOptions};
use crate::verifier::{read_json, train_verifier, write_json, Verifier, VerifierConfig};

/// Sentences drawn by the random-selection ablation.
pub const RANDOM_SELECTION_SIZE: usize = 3;

pub const LEARNING_RATE_GRID: [f64; 6] = [1e-3, 1e-4, 1e-5, 5e-3, 5e-4, 5e-5];
pub const BATCH_SIZE_GRID: [usize; 3] = [4, 8, 16];
pub const ALPHA_GRID: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
pub const TOP_K_GRID: [usize; 6] = [1, 2, 3, 4, 20, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VerifierMode {
    #[default]
    Learned,
    /// Three random sentences per pair, no gate.
    Random,
    /// No verifier; the grader sees a truncated report.
    NoneTruncate,
    /// No verifier; the grader sees a moving-average report embedding.
    NoneMovingAvg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub k: usize,
    pub alpha: f64,
    pub loss: LossKind,
    pub head: HeadKind,
    pub verifier_mode: VerifierMode,
    pub include_report: bool,
    pub mode: DimensionMode,
    pub threshold: f64,
    pub report_strategy: ReportStrategy,
    pub relevant_aggregation: RelevantAggregation,
    pub train_grader_encoders: bool,
    pub encoder: ProviderSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let options = TrainingOptions::default();
        RunConfig {
            seed: 0,
            learning_rate: options.learning_rate,
            batch_size: options.batch_size,
            epochs: options.epochs,
            k: 3,
            alpha: 1.5,
            loss: LossKind::Oll,
            head: HeadKind::Shared,
            verifier_mode: VerifierMode::Learned,
            include_report: true,
            mode: DimensionMode::Scored,
            threshold: 0.5,
            report_strategy: ReportStrategy::Truncate,
            relevant_aggregation: RelevantAggregation::MeanEmbedding,
            train_grader_encoders: false,
            encoder: ProviderSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.training_options().validate()?;
        self.verifier_config().validate()?;
        self.grader_config().validate()?;
        self.encoder.validate()?;
        if self.mode == DimensionMode::Presence && self.verifier_mode != VerifierMode::Learned {
            return Err(Error::Config("presence mode needs the learned verifier".into()));
        }
        if !self.include_report
            && self.verifier_mode != VerifierMode::Learned
            && self.verifier_mode != VerifierMode::Random
        {
            return Err(Error::Config(
                "without both report and verifier the grader has no input".into(),
            ));
        }
        Ok(())
    }

    pub fn training_options(&self) -> TrainingOptions {
        TrainingOptions {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
        }
    }

    pub fn verifier_config(&self) -> VerifierConfig {
        VerifierConfig {
            k: self.k,
            threshold: self.threshold,
            ..Default::default()
        }
    }

    pub fn grader_config(&self) -> GraderConfig {
        let (report_strategy, relevant) = match self.verifier_mode {
            VerifierMode::Learned | VerifierMode::Random => (self.report_strategy, true),
            VerifierMode::NoneTruncate => (ReportStrategy::Truncate, false),
            VerifierMode::NoneMovingAvg => (ReportStrategy::MovingAverage, false),
        };
        GraderConfig {
            alpha: self.alpha,
            loss: self.loss,
            head: self.head,
            report_strategy,
            relevant_aggregation: self.relevant_aggregation,
            slots: InputSlots {
                report: self.include_report || !relevant,
                relevant,
            },
            train_encoders: self.train_grader_encoders,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    RandomVerifier,
    NoVerifierTruncate,
    NoVerifierMovingAverage,
    NoReport,
    CrossEntropy,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::RandomVerifier,
        Ablation::NoVerifierTruncate,
        Ablation::NoVerifierMovingAverage,
        Ablation::NoReport,
        Ablation::CrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::RandomVerifier => "random-verifier",
            Ablation::NoVerifierTruncate => "no-verifier-truncate",
            Ablation::NoVerifierMovingAverage => "no-verifier-moving-average",
            Ablation::NoReport => "no-report",
            Ablation::CrossEntropy => "cross-entropy",
        }
    }

    /// `base` with only this ablation's component changed.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Ablation::RandomVerifier => cfg.verifier_mode = VerifierMode::Random,
            Ablation::NoVerifierTruncate => cfg.verifier_mode = VerifierMode::NoneTruncate,
            Ablation::NoVerifierMovingAverage => cfg.verifier_mode = VerifierMode::NoneMovingAvg,
            Ablation::NoReport => cfg.include_report = false,
            Ablation::CrossEntropy => cfg.loss = LossKind::Ce,
        }
        cfg
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
            Error::Config(format!("unknown ablation `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Seeded draw of up to three sentence positions for one pair, sorted.
pub fn random_positions(seed: u64, report: &Report, dimension_id: &str) -> Vec<usize> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(report.id.as_bytes());
    h.update([0]);
    h.update(dimension_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes));
    let n = report.sentences.len();
    let mut picked = rand::seq::index::sample(&mut rng, n, RANDOM_SELECTION_SIZE.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessedDimension {
    pub dimension_id: String,
    pub score: u8,
    /// `None` when no verifier ran (random or verifier-free ablations).
    pub verifier_probability: Option<f64>,
    pub decision: Option<bool>,
    pub selected_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessedReport {
    pub report_id: String,
    pub per_dimension: Vec<AssessedDimension>,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceResult {
    pub report_id: String,
    pub dimension_ids: Vec<String>,
    pub present: Vec<bool>,
    pub probabilities: Vec<f64>,
}

/// A trained verifier and grader plus what is needed to run them.
#[derive(Debug, Clone)]
pub struct AssessmentModel {
    pub config: RunConfig,
    pub rubric: Rubric,
    pub verifier: Option<Verifier>,
    pub grader: Option<Grader>,
}

#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub model: AssessmentModel,
    pub verifier_log: Option<TrainingLog>,
    pub grader_log: Option<TrainingLog>,
}

impl TrainedPipeline {
    /// Sum of the best validation losses of the trained stages.
    pub fn validation_loss(&self) -> f64 {
        [&self.verifier_log, &self.grader_log]
            .into_iter()
            .flatten()
            .map(|l| l.best_val_loss)
            .sum()
    }
}

/// Relevant positions for every report and dimension, as the grader sees them.
fn selections_for(model: &AssessmentModel, corpus: &Corpus) -> Result<Vec<Vec<Vec<usize>>>> {
    corpus
        .reports
        .iter()
        .map(|report| match (model.config.verifier_mode, &model.verifier) {
            (VerifierMode::Learned, Some(v)) => Ok(v
                .verify_report(report, &corpus.rubric.dimensions)?
                .iter()
                .map(|o| o.positions())
                .collect()),
            (VerifierMode::Random, _) => Ok(corpus
                .rubric
                .dimensions
                .iter()
                .map(|d| random_positions(model.config.seed, report, &d.id))
                .collect()),
            _ => Ok(vec![Vec::new(); corpus.rubric.len()]),
        })
        .collect()
}

/// Trains verifier then grader (scored mode) or the verifier alone
/// (presence mode).
pub fn train_pipeline(corpus: &Corpus, config: &RunConfig) -> Result<TrainedPipeline> {
    config.validate()?;
    if corpus.rubric.mode() != config.mode {
        return Err(Error::ModeMismatch {
            checkpoint: corpus.rubric.mode().as_str().into(),
            requested: config.mode.as_str().into(),
        });
    }
    if corpus.reports_in(Split::Train).next().is_none() {
        return Err(Error::Validation("corpus has no training reports".into()));
    }
    let options = config.training_options();
    let mut model = AssessmentModel {
        config: config.clone(),
        rubric: corpus.rubric.clone(),
        verifier: None,
        grader: None,
    };
    let mut verifier_log = None;
    if config.verifier_mode == VerifierMode::Learned {
        let (verifier, log) = train_verifier(corpus, &config.encoder, &config.verifier_config(), &options)?;
        model.verifier = Some(verifier);
        verifier_log = Some(log);
    }
    let mut grader_log = None;
    if config.mode == DimensionMode::Scored {
        let relevant = selections_for(&model, corpus)?;
        let (grader, log) = train_grader(corpus, &relevant, &config.encoder, &config.grader_config(), &options)?;
        model.grader = Some(grader);
        grader_log = Some(log);
    }
    Ok(TrainedPipeline {
        model,
        verifier_log,
        grader_log,
    })
}

impl AssessmentModel {
    fn check_rubric(&self, rubric: &Rubric) -> Result<()> {
        let ids = |r: &Rubric| r.dimensions.iter().map(|d| d.id.clone()).collect::<Vec<_>>();
        if ids(rubric) != ids(&self.rubric) {
            return Err(Error::CheckpointMismatch(format!(
                "rubric `{}` does not match checkpoint rubric `{}`",
                rubric.id, self.rubric.id
            )));
        }
        Ok(())
    }

    pub fn assess(&self, report: &Report) -> Result<AssessedReport> {
        if self.config.mode != DimensionMode::Scored {
            return Err(Error::ModeMismatch {
                checkpoint: self.config.mode.as_str().into(),
                requested: DimensionMode::Scored.as_str().into(),
            });
        }
        let grader = self
            .grader
            .as_ref()
            .ok_or_else(|| Error::CheckpointMismatch("scored checkpoint has no grader".into()))?;
        let dims = &self.rubric.dimensions;
        let verdicts = match (&self.verifier, self.config.verifier_mode) {
            (Some(v), VerifierMode::Learned) => Some(v.verify_report(report, dims)?),
            (None, VerifierMode::Learned) => {
                return Err(Error::CheckpointMismatch("checkpoint has no verifier".into()))
            }
            _ => None,
        };
        let mut per_dimension = Vec::with_capacity(dims.len());
        for (i, dim) in dims.iter().enumerate() {
            let (probability, decision, positions) = match (&verdicts, self.config.verifier_mode) {
                (Some(v), _) => (Some(v[i].probability), Some(v[i].decision), v[i].positions()),
                (None, VerifierMode::Random) => (None, None, random_positions(self.config.seed, report, &dim.id)),
                _ => (None, None, Vec::new()),
            };
            let score = if decision == Some(false) {
                0
            } else {
                grader.grade_pair(report, dim, &positions)?.argmax().min(dim.max_score)
            };
            per_dimension.push(AssessedDimension {
                dimension_id: dim.id.clone(),
                score,
                verifier_probability: probability,
                decision,
                selected_positions: positions,
            });
        }
        let total = per_dimension.iter().map(|d| d.score as u32).sum();
        Ok(AssessedReport {
            report_id: report.id.clone(),
            per_dimension,
            total,
        })
    }

    pub fn assess_presence(&self, essay: &Report) -> Result<PresenceResult> {
        if self.config.mode != DimensionMode::Presence {
            return Err(Error::ModeMismatch {
                checkpoint: self.config.mode.as_str().into(),
                requested: DimensionMode::Presence.as_str().into(),
            });
        }
        let verifier = self
            .verifier
            .as_ref()
            .ok_or_else(|| Error::CheckpointMismatch("presence checkpoint has no verifier".into()))?;
        let outputs = verifier.verify_report(essay, &self.rubric.dimensions)?;
        Ok(PresenceResult {
            report_id: essay.id.clone(),
            dimension_ids: self.rubric.dimensions.iter().map(|d| d.id.clone()).collect(),
            present: outputs.iter().map(|o| o.decision).collect(),
            probabilities: outputs.iter().map(|o| o.probability).collect(),
        })
    }

    /// Predictions for every report of `split` next to their ground truth.
    pub fn predict_split(&self, corpus: &Corpus, split: Split) -> Result<PredictionSet> {
        self.check_rubric(&corpus.rubric)?;
        let table = corpus.score_table();
        let mut entries = Vec::new();
        for report in corpus.reports_in(split) {
            let truths = corpus.scores_for(&table, report)?;
            let rows: Vec<(u8, Option<bool>)> = match self.config.mode {
                DimensionMode::Scored => self
                    .assess(report)?
                    .per_dimension
                    .iter()
                    .map(|d| (d.score, d.decision))
                    .collect(),
                DimensionMode::Presence => self
                    .assess_presence(report)?
                    .present
                    .iter()
                    .map(|&p| (p as u8, Some(p)))
                    .collect(),
            };
            for ((dim, truth), (predicted, decision)) in self.rubric.dimensions.iter().zip(truths).zip(rows) {
                entries.push(PredictionEntry {
                    report_id: report.id.clone(),
                    dimension_id: dim.id.clone(),
                    predicted,
                    truth,
                    decision,
                });
            }
        }
        if entries.is_empty() {
            return Err(Error::Validation(format!("no reports in split {split:?}")));
        }
        PredictionSet::new(self.rubric.clone(), entries)
    }

    pub fn evaluate_split(&self, corpus: &Corpus, split: Split) -> Result<(PredictionSet, EvaluationReport)> {
        let set = self.predict_split(corpus, split)?;
        let report = metrics::evaluate(&set)?;
        Ok((set, report))
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    mode: DimensionMode,
    /// Relative path -> sha256 of the file contents.
    files: BTreeMap<String, String>,
}

const CHECKPOINT_FORMAT: u32 = 1;

fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(Error::at_path(&dir))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path
                .strip_prefix(root)
                .expect("walked from root")
                .to_string_lossy()
                .replace('\\', "/");
            if rel == "manifest.json" {
                continue;
            }
            let bytes = fs::read(&path).map_err(Error::at_path(&path))?;
            files.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(files)
}

impl TrainedPipeline {
    /// Writes the checkpoint into a sibling temp directory and renames it
    /// into place, so `dir` is either absent, the old checkpoint or complete.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let parent = dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(Error::at_path(parent))?;
        let name = dir
            .file_name()
            .ok_or_else(|| Error::Config(format!("bad checkpoint path {}", dir.display())))?
            .to_string_lossy()
            .into_owned();
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(Error::at_path(&staging))?;
        }
        let result = self.write_into(&staging).and_then(|()| {
            if dir.exists() {
                let old = parent.join(format!(".{name}.old-{}", std::process::id()));
                fs::rename(dir, &old).map_err(Error::at_path(dir))?;
                fs::rename(&staging, dir).map_err(Error::at_path(dir))?;
                fs::remove_dir_all(&old).map_err(Error::at_path(&old))?;
            } else {
                fs::rename(&staging, dir).map_err(Error::at_path(dir))?;
            }
            Ok(())
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    fn write_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("logs")).map_err(Error::at_path(dir))?;
        write_json(&dir.join("config.json"), &self.model.config)?;
        write_json(&dir.join("rubric.json"), &self.model.rubric)?;
        if let Some(v) = &self.model.verifier {
            v.save(&dir.join("verifier"))?;
        }
        if let Some(g) = &self.model.grader {
            g.save(&dir.join("grader"))?;
        }
        for (name, log) in [("verifier", &self.verifier_log), ("grader", &self.grader_log)] {
            if let Some(log) = log {
                let path = dir.join("logs").join(format!("{name}_log.jsonl"));
                fs::write(&path, log.to_jsonl()).map_err(Error::at_path(&path))?;
                write_json(&dir.join("logs").join(format!("{name}_summary.json")), log)?;
            }
        }
        let manifest = Manifest {
            format_version: CHECKPOINT_FORMAT,
            mode: self.model.config.mode,
            files: hash_tree(dir)?,
        };
        write_json(&dir.join("manifest.json"), &manifest)
    }
}

impl AssessmentModel {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != CHECKPOINT_FORMAT {
            return Err(Error::CheckpointMismatch(format!(
                "unsupported checkpoint format {}",
                manifest.format_version
            )));
        }
        let actual = hash_tree(dir)?;
        for (file, hash) in &manifest.files {
            match actual.get(file) {
                Some(h) if h == hash => {}
                Some(_) => {
                    return Err(Error::CheckpointMismatch(format!(
                        "{file} does not match its manifest hash"
                    )))
                }
                None => return Err(Error::CheckpointMismatch(format!("{file} is missing"))),
            }
        }
        let config: RunConfig = read_json(&dir.join("config.json"))?;
        let rubric: Rubric = read_json(&dir.join("rubric.json"))?;
        rubric.validate()?;
        let verifier_dir = dir.join("verifier");
        let grader_dir = dir.join("grader");
        Ok(AssessmentModel {
            verifier: if verifier_dir.exists() {
                Some(Verifier::load(&verifier_dir, &config.encoder)?)
            } else {
                None
            },
            grader: if grader_dir.exists() {
                Some(Grader::load(&grader_dir, &config.encoder)?)
            } else {
                None
            },
            config,
            rubric,
        })
    }
}

// ---------------------------------------------------------------------------
// Ablations and grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: String,
    pub config: RunConfig,
    pub val_loss: f64,
    pub metrics: EvaluationReport,
}

/// Trains `base` with one component swapped and evaluates on the test split.
pub fn run_ablation(corpus: &Corpus, base: &RunConfig, variant: Ablation) -> Result<AblationResult> {
    let config = variant.apply(base);
    let trained = train_pipeline(corpus, &config)?;
    let (_, metrics) = trained.model.evaluate_split(corpus, Split::Test)?;
    Ok(AblationResult {
        variant: variant.name().to_string(),
        val_loss: trained.validation_loss(),
        config,
        metrics,
    })
}

/// Hyperparameter ranges; the defaults are the full published grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub ks: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            learning_rates: LEARNING_RATE_GRID.to_vec(),
            batch_sizes: BATCH_SIZE_GRID.to_vec(),
            alphas: ALPHA_GRID.to_vec(),
            ks: TOP_K_GRID.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.learning_rates.len() * self.batch_sizes.len() * self.alphas.len() * self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in deterministic order (learning rate outermost, k innermost),
    /// built on demand.
    pub fn cells<'a>(&'a self, base: &'a RunConfig) -> impl Iterator<Item = RunConfig> + 'a {
        let (nb, na, nk) = (self.batch_sizes.len(), self.alphas.len(), self.ks.len());
        (0..self.len()).map(move |i| {
            let mut cfg = base.clone();
            cfg.k = self.ks[i % nk];
            cfg.alpha = self.alphas[(i / nk) % na];
            cfg.batch_size = self.batch_sizes[(i / (nk * na)) % nb];
            cfg.learning_rate = self.learning_rates[i / (nk * na * nb)];
            cfg
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub config: RunConfig,
    pub val_loss: Option<f64>,
    pub diverged: bool,
    pub metrics: Option<EvaluationReport>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: RunConfig,
    pub best_val_loss: f64,
    pub leaderboard: Vec<LeaderboardRow>,
}

/// Runs `evaluate_cell` on every grid cell and keeps the lowest finite
/// validation loss; earlier cells win ties. Non-finite losses are flagged
/// as diverged.
pub fn grid_search_with<F>(grid: &GridSpec, base: &RunConfig, mut evaluate_cell: F) -> Result<GridResult>
where
    F: FnMut(&RunConfig) -> Result<(f64, Option<EvaluationReport>)>,
{
    if grid.is_empty() {
        return Err(Error::Config("grid has no cells".into()));
    }
    let mut leaderboard = Vec::new();
    let mut best: Option<(f64, RunConfig)> = None;
    for cfg in grid.cells(base) {
        let (loss, metrics) = evaluate_cell(&cfg)?;
        let diverged = !loss.is_finite();
        if diverged {
            log::warn!(
                "grid cell lr={} bs={} alpha={} k={} diverged",
                cfg.learning_rate,
                cfg.batch_size,
                cfg.alpha,
                cfg.k
            );
        } else if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, cfg.clone()));
        }
        leaderboard.push(LeaderboardRow {
            config: cfg,
            val_loss: (!diverged).then_some(loss),
            diverged,
            metrics,
        });
    }
    let (best_val_loss, best) = best.ok_or_else(|| Error::Validation("every grid cell diverged".into()))?;
    Ok(GridResult {
        best,
        best_val_loss,
        leaderboard,
    })
}

/// Grid search that trains each cell and scores it by validation loss.
pub fn grid_search(corpus: &Corpus, grid: &GridSpec, base: &RunConfig) -> Result<GridResult> {
    grid_search_with(grid, base, |cfg| {
        let trained = train_pipeline(corpus, cfg)?;
        let loss = trained.validation_loss();
        let metrics = if loss.is_finite() {
            trained.model.evaluate_split(corpus, Split::Val).ok().map(|(_, m)| m)
        } else {
            None
        };
        Ok((loss, metrics))
    })
}

/// Appends rows as JSON lines.
pub fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(Error::at_path(parent))?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(Error::at_path(path))?;
    for row in rows {
        writeln!(f, "{}", serde_json::to_string(row)?).map_err(Error::at_path(path))?;
    }
    Ok(())
}

pub fn default_checkpoint_dir() -> PathBuf {
    PathBuf::from("checkpoint")
}

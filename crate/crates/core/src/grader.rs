//! Ordinal grader: maps (dimension, report, relevant sentences) to a
//! distribution over the scores 0..=5.
//!
//! The three inputs are embedded with a dual encoder (a query-side encoder for
//! the dimension, a report-side encoder shared by the report and the relevant
//! sentences), concatenated in that order and fed through one linear layer and
//! a softmax. Training minimizes ordinal log loss
//! `-Σ_i log(1 - p_i) |y - i|^α`, or plain cross-entropy for comparison.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Report, RubricDimension, Split};
use crate::encoder::{BaseEncoder, Embedding, Encoder, EncoderHandle, ProviderSettings, ReportStrategy, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::optim::{Adam, EpochLog, TrainingLog, TrainingOptions};
use crate::verifier::{labelled_pairs, load_encoder, read_json, write_json, PROB_CLAMP};

pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub probs: [f64; NUM_CLASSES],
}

impl ScoreDistribution {
    pub fn new(probs: [f64; NUM_CLASSES]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("probabilities sum to {total}, not 1")));
        }
        Ok(ScoreDistribution { probs })
    }

    pub fn uniform() -> Self {
        ScoreDistribution {
            probs: [1.0 / NUM_CLASSES as f64; NUM_CLASSES],
        }
    }

    pub fn one_hot(class: usize) -> Self {
        let mut probs = [0.0; NUM_CLASSES];
        probs[class] = 1.0;
        ScoreDistribution { probs }
    }

    /// Most probable score; ties go to the lower score.
    pub fn argmax(&self) -> u8 {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best as u8
    }

    fn from_logits(logits: &[f64]) -> Self {
        let p = linalg::softmax(logits);
        let mut probs = [0.0; NUM_CLASSES];
        probs.copy_from_slice(&p);
        ScoreDistribution { probs }
    }
}

fn check_label(y: u8) -> Result<usize> {
    if (y as usize) < NUM_CLASSES {
        Ok(y as usize)
    } else {
        Err(Error::Validation(format!("score label {y} outside 0..=5")))
    }
}

/// Ordinal log loss with absolute distance.
pub fn oll_loss(dist: &ScoreDistribution, y: u8, alpha: f64) -> Result<f64> {
    let y = check_label(y)?;
    Ok(dist
        .probs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(i, &p)| {
            let distance = (y as f64 - i as f64).abs().powf(alpha);
            -(1.0 - p.min(1.0 - PROB_CLAMP)).ln() * distance
        })
        .sum())
}

/// `dL/dp_i` of [`oll_loss`].
pub fn oll_grad(dist: &ScoreDistribution, y: u8, alpha: f64) -> Result<[f64; NUM_CLASSES]> {
    let y = check_label(y)?;
    let mut g = [0.0; NUM_CLASSES];
    for (i, &p) in dist.probs.iter().enumerate() {
        if i != y && p < 1.0 - PROB_CLAMP {
            g[i] = (y as f64 - i as f64).abs().powf(alpha) / (1.0 - p);
        }
    }
    Ok(g)
}

pub fn ce_loss(dist: &ScoreDistribution, y: u8) -> Result<f64> {
    let y = check_label(y)?;
    Ok(-dist.probs[y].max(PROB_CLAMP).ln())
}

pub fn ce_grad(dist: &ScoreDistribution, y: u8) -> Result<[f64; NUM_CLASSES]> {
    let y = check_label(y)?;
    let mut g = [0.0; NUM_CLASSES];
    if dist.probs[y] > PROB_CLAMP {
        g[y] = -1.0 / dist.probs[y];
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Oll,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    #[default]
    Shared,
    PerDimension,
}

/// How the relevant sentences become one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelevantAggregation {
    /// Mean of the sentence embeddings.
    #[default]
    MeanEmbedding,
    /// Encode the sentences joined into one text.
    ConcatText,
}

/// Which slots besides the dimension the grader sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSlots {
    pub report: bool,
    pub relevant: bool,
}

impl Default for InputSlots {
    fn default() -> Self {
        InputSlots {
            report: true,
            relevant: true,
        }
    }
}

impl InputSlots {
    pub fn count(&self) -> usize {
        1 + self.report as usize + self.relevant as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraderConfig {
    pub alpha: f64,
    pub loss: LossKind,
    pub head: HeadKind,
    pub report_strategy: ReportStrategy,
    pub relevant_aggregation: RelevantAggregation,
    pub slots: InputSlots,
    /// Fine-tune the grader's encoder projections along with the head.
    pub train_encoders: bool,
}

impl Default for GraderConfig {
    fn default() -> Self {
        GraderConfig {
            alpha: 1.5,
            loss: LossKind::Oll,
            head: HeadKind::Shared,
            report_strategy: ReportStrategy::Truncate,
            relevant_aggregation: RelevantAggregation::MeanEmbedding,
            slots: InputSlots::default(),
            train_encoders: true,
        }
    }
}

impl GraderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn loss(&self, dist: &ScoreDistribution, y: u8) -> Result<f64> {
        match self.loss {
            LossKind::Oll => oll_loss(dist, y, self.alpha),
            LossKind::Ce => ce_loss(dist, y),
        }
    }

    fn loss_grad(&self, dist: &ScoreDistribution, y: u8) -> Result<[f64; NUM_CLASSES]> {
        match self.loss {
            LossKind::Oll => oll_grad(dist, y, self.alpha),
            LossKind::Ce => ce_grad(dist, y),
        }
    }
}

/// Linear prediction layer `z = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(input_dim: usize) -> Self {
        LinearHead {
            weights: Matrix::zeros(NUM_CLASSES, input_dim),
            bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.matvec(x);
        linalg::axpy(1.0, &self.bias, &mut z);
        z
    }
}

/// Concatenates `[dimension; report; relevant]` (absent slots skipped),
/// applies the head and normalizes.
pub fn grade(
    dimension: &Embedding,
    report: Option<&Embedding>,
    relevant: Option<&Embedding>,
    head: &LinearHead,
) -> Result<ScoreDistribution> {
    let mut x = dimension.values.clone();
    for e in [report, relevant].into_iter().flatten() {
        if e.dim() != dimension.dim() {
            return Err(Error::DimensionMismatch {
                expected: dimension.dim(),
                found: e.dim(),
            });
        }
        x.extend_from_slice(&e.values);
    }
    if x.len() != head.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: head.input_dim(),
            found: x.len(),
        });
    }
    Ok(ScoreDistribution::from_logits(&head.logits(&x)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Heads {
    Shared(LinearHead),
    /// One head per rubric dimension, in rubric order.
    PerDimension(Vec<(String, LinearHead)>),
}

impl Heads {
    fn new(kind: HeadKind, input_dim: usize, dimension_ids: &[String]) -> Self {
        match kind {
            HeadKind::Shared => Heads::Shared(LinearHead::zeros(input_dim)),
            HeadKind::PerDimension => Heads::PerDimension(
                dimension_ids
                    .iter()
                    .map(|id| (id.clone(), LinearHead::zeros(input_dim)))
                    .collect(),
            ),
        }
    }

    pub fn for_dimension(&self, dimension_id: &str) -> Result<&LinearHead> {
        match self {
            Heads::Shared(h) => Ok(h),
            Heads::PerDimension(hs) => hs
                .iter()
                .find(|(id, _)| id == dimension_id)
                .map(|(_, h)| h)
                .ok_or_else(|| Error::UnknownDimension(dimension_id.to_string())),
        }
    }

    fn slot_mut(&mut self, slot: usize) -> &mut LinearHead {
        match self {
            Heads::Shared(h) => h,
            Heads::PerDimension(hs) => &mut hs[slot].1,
        }
    }

    fn slot(&self, slot: usize) -> &LinearHead {
        match self {
            Heads::Shared(h) => h,
            Heads::PerDimension(hs) => &hs[slot].1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Heads::Shared(_) => 1,
            Heads::PerDimension(hs) => hs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Heads::Shared(h) => h.parameter_count(),
            Heads::PerDimension(hs) => hs.iter().map(|(_, h)| h.parameter_count()).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grader {
    pub query: Encoder,
    pub report: Encoder,
    pub heads: Heads,
    pub config: GraderConfig,
}

impl Grader {
    /// Untrained grader: identity projections, zero heads.
    pub fn new(settings: &ProviderSettings, config: GraderConfig, dimension_ids: &[String]) -> Result<Self> {
        config.validate()?;
        let dim = settings.embedding_dim;
        Ok(Grader {
            query: Encoder::new(settings.clone(), Side::Query)?.with_projection(Matrix::identity(dim))?,
            report: Encoder::new(settings.clone(), Side::Passage)?.with_projection(Matrix::identity(dim))?,
            heads: Heads::new(config.head, config.slots.count() * dim, dimension_ids),
            config,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.config.slots.count() * self.query.embedding_dim()
    }

    /// Distribution for one pair, given the relevant sentence positions.
    pub fn grade_pair(
        &self,
        report: &Report,
        dimension: &RubricDimension,
        relevant_positions: &[usize],
    ) -> Result<ScoreDistribution> {
        let head = self.heads.for_dimension(&dimension.id)?;
        let q = self.query.encode(&[dimension.query_text.as_str()])?.remove(0);
        let r = if self.config.slots.report {
            Some(self.report.encode_report(report, self.config.report_strategy)?)
        } else {
            None
        };
        let rel = if self.config.slots.relevant {
            Some(self.encode_relevant(report, relevant_positions)?)
        } else {
            None
        };
        grade(&q, r.as_ref(), rel.as_ref(), head)
    }

    fn encode_relevant(&self, report: &Report, positions: &[usize]) -> Result<Embedding> {
        let texts = relevant_texts(report, positions)?;
        match self.config.relevant_aggregation {
            RelevantAggregation::MeanEmbedding => {
                let embs = self.report.encode(&texts)?;
                let refs: Vec<&[f64]> = embs.iter().map(|e| e.values.as_slice()).collect();
                Embedding::new(linalg::mean_of(&refs))
            }
            RelevantAggregation::ConcatText => Ok(self.report.encode(&[texts.join(" ")])?.remove(0)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
        let head_files = match &self.heads {
            Heads::Shared(h) => {
                write_json(&dir.join("head.json"), h)?;
                vec![(None, "head.json".to_string())]
            }
            Heads::PerDimension(hs) => {
                let mut files = Vec::new();
                for (i, (id, h)) in hs.iter().enumerate() {
                    let name = format!("head_{:02}.json", i + 1);
                    write_json(&dir.join(&name), h)?;
                    files.push((Some(id.clone()), name));
                }
                files
            }
        };
        let snapshot = GraderSnapshot {
            config: self.config.clone(),
            query_handle: self.query.handle(),
            report_handle: self.report.handle(),
            heads: head_files
                .into_iter()
                .map(|(dimension_id, file)| HeadFile { dimension_id, file })
                .collect(),
        };
        write_json(&dir.join("config.json"), &snapshot)?;
        write_json(&dir.join("query_projection.json"), &self.query.projection())?;
        write_json(&dir.join("report_projection.json"), &self.report.projection())?;
        Ok(())
    }

    pub fn load(dir: &Path, settings: &ProviderSettings) -> Result<Self> {
        let snapshot: GraderSnapshot = read_json(&dir.join("config.json"))?;
        snapshot.config.validate()?;
        let query = load_encoder(&dir.join("query_projection.json"), settings, Side::Query)?;
        let report = load_encoder(&dir.join("report_projection.json"), settings, Side::Passage)?;
        for (handle, expected) in [
            (query.handle(), &snapshot.query_handle),
            (report.handle(), &snapshot.report_handle),
        ] {
            if handle.params_version != expected.params_version {
                return Err(Error::CheckpointMismatch(format!(
                    "grader {:?} encoder params_version {} does not match snapshot {}",
                    handle.side, handle.params_version, expected.params_version
                )));
            }
        }
        let heads = match snapshot.config.head {
            HeadKind::Shared => {
                let file = snapshot
                    .heads
                    .first()
                    .ok_or_else(|| Error::CheckpointMismatch("grader has no head file".into()))?;
                Heads::Shared(read_json(&dir.join(&file.file))?)
            }
            HeadKind::PerDimension => Heads::PerDimension(
                snapshot
                    .heads
                    .iter()
                    .map(|f| {
                        let id = f
                            .dimension_id
                            .clone()
                            .ok_or_else(|| Error::CheckpointMismatch(format!("{} has no dimension id", f.file)))?;
                        Ok((id, read_json(&dir.join(&f.file))?))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let grader = Grader {
            query,
            report,
            heads,
            config: snapshot.config,
        };
        for i in 0..grader.heads.len() {
            if grader.heads.slot(i).input_dim() != grader.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: grader.input_dim(),
                    found: grader.heads.slot(i).input_dim(),
                });
            }
        }
        Ok(grader)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HeadFile {
    dimension_id: Option<String>,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraderSnapshot {
    config: GraderConfig,
    query_handle: EncoderHandle,
    report_handle: EncoderHandle,
    heads: Vec<HeadFile>,
}

fn relevant_texts<'a>(report: &'a Report, positions: &[usize]) -> Result<Vec<&'a str>> {
    if positions.is_empty() {
        return Err(Error::Validation(format!(
            "no relevant sentences selected for report `{}`",
            report.id
        )));
    }
    positions
        .iter()
        .map(|&p| {
            report
                .sentences
                .get(p)
                .map(|s| s.text.as_str())
                .ok_or_else(|| Error::Validation(format!("report `{}` has no sentence {p}", report.id)))
        })
        .collect()
}

fn base_relevant(
    base: &BaseEncoder,
    report: &Report,
    positions: &[usize],
    aggregation: RelevantAggregation,
) -> Result<Vec<f64>> {
    let texts = relevant_texts(report, positions)?;
    Ok(match aggregation {
        RelevantAggregation::MeanEmbedding => {
            let embs: Vec<Vec<f64>> = texts.iter().map(|t| base.embed(t).0).collect();
            let refs: Vec<&[f64]> = embs.iter().map(Vec::as_slice).collect();
            linalg::mean_of(&refs)
        }
        RelevantAggregation::ConcatText => base.embed(&texts.join(" ")).0,
    })
}

/// Loss of one example and its gradient with respect to the head logits.
pub(crate) fn head_backward(head: &LinearHead, x: &[f64], y: u8, config: &GraderConfig) -> Result<(f64, Vec<f64>)> {
    let dist = ScoreDistribution::from_logits(&head.logits(x));
    let loss = config.loss(&dist, y)?;
    let dl_dp = config.loss_grad(&dist, y)?;
    let weighted: f64 = dist.probs.iter().zip(&dl_dp).map(|(p, g)| p * g).sum();
    let dz = dist.probs.iter().zip(&dl_dp).map(|(p, g)| p * (g - weighted)).collect();
    Ok((loss, dz))
}

struct GraderExample {
    slot: usize,
    label: u8,
    query: usize,
    report: Option<Vec<f64>>,
    relevant: Option<Vec<f64>>,
}

struct Params {
    bq: Matrix,
    br: Matrix,
    heads: Heads,
}

impl Params {
    fn features(&self, queries: &[Vec<f64>], ex: &GraderExample) -> Vec<f64> {
        let mut x = self.bq.matvec(&queries[ex.query]);
        for h in [&ex.report, &ex.relevant].into_iter().flatten() {
            x.extend(self.br.matvec(h));
        }
        x
    }

    fn distribution(&self, queries: &[Vec<f64>], ex: &GraderExample) -> ScoreDistribution {
        let x = self.features(queries, ex);
        ScoreDistribution::from_logits(&self.heads.slot(ex.slot).logits(&x))
    }
}

struct Grads {
    bq: Matrix,
    br: Matrix,
    heads: Vec<LinearHead>,
}

/// Trains the grader with encoders and heads updated by Adam; keeps the
/// lowest-validation-loss epoch.
///
/// `relevant[report_index][dimension_slot]` holds the sentence positions the
/// selection stage forwarded for each pair (ignored when the relevant slot
/// is disabled).
pub fn train_grader(
    corpus: &Corpus,
    relevant: &[Vec<Vec<usize>>],
    settings: &ProviderSettings,
    config: &GraderConfig,
    options: &TrainingOptions,
) -> Result<(Grader, TrainingLog)> {
    config.validate()?;
    options.validate()?;
    let dimension_ids: Vec<String> = corpus.rubric.dimensions.iter().map(|d| d.id.clone()).collect();
    let mut grader = Grader::new(settings, config.clone(), &dimension_ids)?;
    let base = grader.query.base().clone();
    let queries: Vec<Vec<f64>> = corpus
        .rubric
        .dimensions
        .iter()
        .map(|d| base.embed(&d.query_text).0)
        .collect();

    let build = |split: Split| -> Result<Vec<GraderExample>> {
        let mut report_cache: Vec<Option<Vec<f64>>> = vec![None; corpus.reports.len()];
        labelled_pairs(corpus, split)
            .into_iter()
            .map(|(ri, di, label)| {
                let report = &corpus.reports[ri];
                let report_emb = if config.slots.report {
                    let cached =
                        report_cache[ri].get_or_insert_with(|| base.embed_report(report, config.report_strategy).0);
                    Some(cached.clone())
                } else {
                    None
                };
                let relevant_emb = if config.slots.relevant {
                    Some(base_relevant(
                        &base,
                        report,
                        &relevant[ri][di],
                        config.relevant_aggregation,
                    )?)
                } else {
                    None
                };
                Ok(GraderExample {
                    slot: match config.head {
                        HeadKind::Shared => 0,
                        HeadKind::PerDimension => di,
                    },
                    label,
                    query: di,
                    report: report_emb,
                    relevant: relevant_emb,
                })
            })
            .collect()
    };
    let train = build(Split::Train)?;
    if train.is_empty() {
        return Err(Error::Validation("no scored training pairs".into()));
    }
    let mut log = TrainingLog::default();
    let mut val = build(Split::Val)?;
    if val.is_empty() {
        let msg = "no validation pairs; selecting on training loss".to_string();
        log::warn!("{msg}");
        log.warnings.push(msg);
        val = build(Split::Train)?;
    }

    let mut params = Params {
        bq: grader.query.projection().cloned().expect("identity projection"),
        br: grader.report.projection().cloned().expect("identity projection"),
        heads: grader.heads.clone(),
    };
    let n_heads = params.heads.len();
    let head_len = params.heads.slot(0).parameter_count();
    let mut adam_bq = Adam::new(options.adam(), params.bq.len());
    let mut adam_br = Adam::new(options.adam(), params.br.len());
    let mut adam_heads: Vec<Adam> = (0..n_heads).map(|_| Adam::new(options.adam(), head_len)).collect();

    let mean_loss = |params: &Params, examples: &[GraderExample]| -> Result<f64> {
        let mut total = 0.0;
        for ex in examples {
            total += config.loss(&params.distribution(&queries, ex), ex.label)?;
        }
        Ok(total / examples.len() as f64)
    };

    let dim = params.bq.rows;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_loss = mean_loss(&params, &val)?;
    let mut best = (params.bq.clone(), params.br.clone(), params.heads.clone());
    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch_size) {
            let mut grads = Grads {
                bq: Matrix::zeros(params.bq.rows, params.bq.cols),
                br: Matrix::zeros(params.br.rows, params.br.cols),
                heads: (0..n_heads)
                    .map(|i| LinearHead::zeros(params.heads.slot(i).input_dim()))
                    .collect(),
            };
            let mut touched = vec![false; n_heads];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train[i];
                let x = params.features(&queries, ex);
                let head = params.heads.slot(ex.slot);
                let (loss, mut dz) = head_backward(head, &x, ex.label, config)?;
                epoch_loss += loss;
                dz.iter_mut().for_each(|v| *v *= scale);
                let gh = &mut grads.heads[ex.slot];
                gh.weights.add_outer(1.0, &dz, &x);
                linalg::axpy(1.0, &dz, &mut gh.bias);
                touched[ex.slot] = true;
                if config.train_encoders {
                    let dx = head.weights.matvec_t(&dz);
                    grads.bq.add_outer(1.0, &dx[..dim], &queries[ex.query]);
                    let mut offset = dim;
                    for h in [&ex.report, &ex.relevant].into_iter().flatten() {
                        grads.br.add_outer(1.0, &dx[offset..offset + dim], h);
                        offset += dim;
                    }
                }
            }
            for (slot, g) in grads.heads.iter().enumerate() {
                if !touched[slot] {
                    continue;
                }
                let head = params.heads.slot_mut(slot);
                let mut flat = head.weights.data.clone();
                flat.extend_from_slice(&head.bias);
                let mut gflat = g.weights.data.clone();
                gflat.extend_from_slice(&g.bias);
                adam_heads[slot].step(&mut flat, &gflat);
                let split = head.weights.len();
                head.weights.data.copy_from_slice(&flat[..split]);
                head.bias.copy_from_slice(&flat[split..]);
            }
            if config.train_encoders {
                adam_bq.step(&mut params.bq.data, &grads.bq.data);
                adam_br.step(&mut params.br.data, &grads.br.data);
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = mean_loss(&params, &val)?;
        log::info!("grader epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = (params.bq.clone(), params.br.clone(), params.heads.clone());
            log.best_epoch = epoch;
        }
    }
    log.best_val_loss = best_loss;
    grader.query = Encoder::new(settings.clone(), Side::Query)?.with_projection(best.0)?;
    grader.report = Encoder::new(settings.clone(), Side::Passage)?.with_projection(best.1)?;
    grader.heads = best.2;
    Ok((grader, log))
}

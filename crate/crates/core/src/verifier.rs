//! Sentence verifier: ranks report sentences against a rubric dimension and
//! decides whether the report deserves a non-zero score on it.
//!
//! Similarity is the cosine between a query-side embedding of the dimension
//! text and a passage-side embedding of each sentence. The mean `D` of the
//! top-k similarities becomes a probability through `1 / (1 + e^(-10 (D - 0.5)))`,
//! and the decision is `probability > threshold`. Training minimizes weighted
//! binary cross-entropy against the label `score > 0`.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Report, RubricDimension, Split};
use crate::encoder::{BaseEncoder, Encoder, ProviderSettings, Side};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::optim::{Adam, EpochLog, TrainingLog, TrainingOptions};

/// Slope of the similarity-to-probability map.
pub const SIGMOID_SCALE: f64 = 10.0;
/// Mean similarity that maps to probability 0.5.
pub const SIGMOID_CENTER: f64 = 0.5;
/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub sentence_position: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub k: usize,
    pub threshold: f64,
    pub epsilon: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            k: 3,
            threshold: 0.5,
            epsilon: 1e-8,
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierOutput {
    pub probability: f64,
    pub top_k: Vec<SimilarityScore>,
    pub decision: bool,
}

impl VerifierOutput {
    pub fn positions(&self) -> Vec<usize> {
        self.top_k.iter().map(|s| s.sentence_position).collect()
    }
}

pub fn cosine_similarity(query: &[f64], sentence: &[f64], epsilon: f64) -> Result<f64> {
    if query.len() != sentence.len() {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: sentence.len(),
        });
    }
    let denom = (linalg::norm(query) * linalg::norm(sentence)).max(epsilon);
    Ok(linalg::dot(query, sentence) / denom)
}

/// Top `min(k, n)` entries, descending by value, ties to the lower position.
pub fn rank_top_k(similarities: &[f64], k: usize) -> Vec<SimilarityScore> {
    let mut scored: Vec<SimilarityScore> = similarities
        .iter()
        .enumerate()
        .map(|(i, &v)| SimilarityScore {
            sentence_position: i,
            value: if v.is_nan() { f64::NEG_INFINITY } else { v },
        })
        .collect();
    scored.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(Ordering::Equal)
            .then(a.sentence_position.cmp(&b.sentence_position))
    });
    scored.truncate(k);
    scored
}

/// `1 / (1 + e^(-10 (D - 0.5)))`
pub fn logistic(mean_similarity: f64) -> f64 {
    1.0 / (1.0 + (-SIGMOID_SCALE * (mean_similarity - SIGMOID_CENTER)).exp())
}

pub fn relevance_probability(top_k: &[SimilarityScore]) -> Result<f64> {
    if top_k.is_empty() {
        return Err(Error::Validation(
            "relevance_probability needs at least one similarity".into(),
        ));
    }
    let mean = top_k.iter().map(|s| s.value).sum::<f64>() / top_k.len() as f64;
    Ok(logistic(mean))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `-[w y log p + (1 - y) log(1 - p)]`
pub fn weighted_bce_loss(probability: f64, label: bool, positive_weight: f64) -> f64 {
    let p = clamp_prob(probability);
    if label {
        -positive_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`weighted_bce_loss`] with respect to the probability.
pub fn weighted_bce_grad(probability: f64, label: bool, positive_weight: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&probability) {
        return 0.0;
    }
    if label {
        -positive_weight / probability
    } else {
        1.0 / (1.0 - probability)
    }
}

/// A trained (or untrained) dual-encoder verifier.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub query: Encoder,
    pub passage: Encoder,
    pub config: VerifierConfig,
}

impl Verifier {
    /// Verifier over the raw provider space (identity projections).
    pub fn new(settings: &ProviderSettings, config: VerifierConfig) -> Result<Self> {
        config.validate()?;
        let dim = settings.embedding_dim;
        Ok(Verifier {
            query: Encoder::new(settings.clone(), Side::Query)?.with_projection(Matrix::identity(dim))?,
            passage: Encoder::new(settings.clone(), Side::Passage)?.with_projection(Matrix::identity(dim))?,
            config,
        })
    }

    pub fn select_top_k(&self, report: &Report, dimension: &RubricDimension) -> Result<Vec<SimilarityScore>> {
        select_top_k(report, dimension, &self.query, &self.passage, &self.config)
    }

    pub fn verify(&self, report: &Report, dimension: &RubricDimension) -> Result<VerifierOutput> {
        let top_k = self.select_top_k(report, dimension)?;
        let probability = relevance_probability(&top_k)?;
        Ok(VerifierOutput {
            probability,
            decision: probability > self.config.threshold,
            top_k,
        })
    }

    /// [`Verifier::verify`] for every dimension, encoding the sentences once.
    pub fn verify_report(&self, report: &Report, dimensions: &[RubricDimension]) -> Result<Vec<VerifierOutput>> {
        if report.sentences.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let sentences = self.passage.encode(&report.sentence_texts())?;
        let queries: Vec<&str> = dimensions.iter().map(|d| d.query_text.as_str()).collect();
        let queries = self.query.encode(&queries)?;
        queries
            .iter()
            .map(|q| {
                let sims = sentences
                    .iter()
                    .map(|s| cosine_similarity(&q.values, &s.values, self.config.epsilon))
                    .collect::<Result<Vec<_>>>()?;
                let top_k = rank_top_k(&sims, self.config.k);
                let probability = relevance_probability(&top_k)?;
                Ok(VerifierOutput {
                    probability,
                    decision: probability > self.config.threshold,
                    top_k,
                })
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::at_path(dir))?;
        let snapshot = VerifierSnapshot {
            config: self.config.clone(),
            sigmoid_scale: SIGMOID_SCALE,
            sigmoid_center: SIGMOID_CENTER,
            query_handle: self.query.handle(),
            passage_handle: self.passage.handle(),
        };
        write_json(&dir.join("config.json"), &snapshot)?;
        write_json(&dir.join("query_projection.json"), &self.query.projection())?;
        write_json(&dir.join("passage_projection.json"), &self.passage.projection())?;
        Ok(())
    }

    pub fn load(dir: &Path, settings: &ProviderSettings) -> Result<Self> {
        let snapshot: VerifierSnapshot = read_json(&dir.join("config.json"))?;
        let query = load_encoder(&dir.join("query_projection.json"), settings, Side::Query)?;
        let passage = load_encoder(&dir.join("passage_projection.json"), settings, Side::Passage)?;
        for (handle, expected) in [
            (query.handle(), &snapshot.query_handle),
            (passage.handle(), &snapshot.passage_handle),
        ] {
            if handle.params_version != expected.params_version {
                return Err(Error::CheckpointMismatch(format!(
                    "verifier {:?} encoder params_version {} does not match snapshot {}",
                    handle.side, handle.params_version, expected.params_version
                )));
            }
        }
        snapshot.config.validate()?;
        Ok(Verifier {
            query,
            passage,
            config: snapshot.config,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VerifierSnapshot {
    config: VerifierConfig,
    sigmoid_scale: f64,
    sigmoid_center: f64,
    query_handle: crate::encoder::EncoderHandle,
    passage_handle: crate::encoder::EncoderHandle,
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(Error::at_path(path))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn load_encoder(path: &Path, settings: &ProviderSettings, side: Side) -> Result<Encoder> {
    let projection: Option<Matrix> = read_json(path)?;
    let encoder = Encoder::new(settings.clone(), side)?;
    match projection {
        Some(p) => encoder.with_projection(p),
        None => Ok(encoder),
    }
}

pub fn select_top_k(
    report: &Report,
    dimension: &RubricDimension,
    query: &Encoder,
    passage: &Encoder,
    config: &VerifierConfig,
) -> Result<Vec<SimilarityScore>> {
    if report.sentences.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let q = query.encode(&[dimension.query_text.as_str()])?.remove(0);
    let sentences = passage.encode(&report.sentence_texts())?;
    let sims = sentences
        .iter()
        .map(|s| cosine_similarity(&q.values, &s.values, config.epsilon))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_top_k(&sims, config.k))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One (report, dimension) example with precomputed base embeddings.
pub(crate) struct PairExample<'a> {
    pub query: &'a [f64],
    pub sentences: &'a [Vec<f64>],
    pub label: bool,
    pub weight: f64,
}

/// Gradient of `c = u.v / max(|u||v|, eps)` with respect to `u` and `v`.
fn cosine_grads(u: &[f64], v: &[f64], epsilon: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let (nu, nv) = (linalg::norm(u), linalg::norm(v));
    let denom = nu * nv;
    if denom > epsilon {
        let c = linalg::dot(u, v) / denom;
        let du = u
            .iter()
            .zip(v)
            .map(|(ui, vi)| vi / denom - c * ui / (nu * nu))
            .collect();
        let dv = u
            .iter()
            .zip(v)
            .map(|(ui, vi)| ui / denom - c * vi / (nv * nv))
            .collect();
        (c, du, dv)
    } else {
        let c = linalg::dot(u, v) / epsilon;
        (
            c,
            v.iter().map(|x| x / epsilon).collect(),
            u.iter().map(|x| x / epsilon).collect(),
        )
    }
}

/// Loss of one example; when `grads` is given, accumulates `scale * dL/dW`
/// into the query and passage projection gradients.
pub(crate) fn pair_loss(
    wq: &Matrix,
    ws: &Matrix,
    example: &PairExample<'_>,
    config: &VerifierConfig,
    grads: Option<(&mut Matrix, &mut Matrix, f64)>,
) -> f64 {
    let u = wq.matvec(example.query);
    let projected: Vec<Vec<f64>> = example.sentences.iter().map(|h| ws.matvec(h)).collect();
    let sims: Vec<f64> = projected
        .iter()
        .map(|v| {
            let denom = (linalg::norm(&u) * linalg::norm(v)).max(config.epsilon);
            linalg::dot(&u, v) / denom
        })
        .collect();
    let top = rank_top_k(&sims, config.k);
    let mean = top.iter().map(|s| s.value).sum::<f64>() / top.len() as f64;
    let p = logistic(mean);
    let loss = weighted_bce_loss(p, example.label, example.weight);

    if let Some((gq, gs, scale)) = grads {
        let dl_dd = weighted_bce_grad(p, example.label, example.weight) * SIGMOID_SCALE * p * (1.0 - p);
        if dl_dd != 0.0 {
            let per_sim = scale * dl_dd / top.len() as f64;
            let mut du_total = vec![0.0; u.len()];
            for s in &top {
                let v = &projected[s.sentence_position];
                let (_, du, dv) = cosine_grads(&u, v, config.epsilon);
                linalg::axpy(per_sim, &du, &mut du_total);
                gs.add_outer(per_sim, &dv, &example.sentences[s.sentence_position]);
            }
            gq.add_outer(1.0, &du_total, example.query);
        }
    }
    loss
}

/// Inverse-frequency positive weight per dimension over the training split.
pub fn positive_weights(corpus: &Corpus, warnings: &mut Vec<String>) -> Vec<f64> {
    let table = corpus.score_table();
    corpus
        .rubric
        .dimensions
        .iter()
        .map(|dim| {
            let (mut pos, mut neg) = (0usize, 0usize);
            for report in corpus.reports_in(Split::Train) {
                match table.get(&(report.id.clone(), dim.id.clone())) {
                    Some(&s) if s > 0 => pos += 1,
                    Some(_) => neg += 1,
                    None => {}
                }
            }
            if pos == 0 || neg == 0 {
                let msg = format!(
                    "dimension `{}` has {pos} positive and {neg} negative training pairs; using weight 1",
                    dim.id
                );
                log::warn!("{msg}");
                warnings.push(msg);
                1.0
            } else {
                (neg as f64 / pos as f64).clamp(1e-3, 1e3)
            }
        })
        .collect()
}

/// Base embeddings of the rubric queries and of every sentence per report.
pub(crate) struct BaseCache {
    pub queries: Vec<Vec<f64>>,
    pub sentences: Vec<Vec<Vec<f64>>>,
}

impl BaseCache {
    pub fn build(base: &BaseEncoder, corpus: &Corpus) -> Self {
        BaseCache {
            queries: corpus
                .rubric
                .dimensions
                .iter()
                .map(|d| base.embed(&d.query_text).0)
                .collect(),
            sentences: corpus
                .reports
                .iter()
                .map(|r| r.sentences.iter().map(|s| base.embed(&s.text).0).collect())
                .collect(),
        }
    }
}

/// `(report index, dimension slot, label)` for every scored pair of a split.
pub(crate) fn labelled_pairs(corpus: &Corpus, split: Split) -> Vec<(usize, usize, u8)> {
    let table = corpus.score_table();
    let mut out = Vec::new();
    for (ri, report) in corpus.reports.iter().enumerate() {
        if report.split != split {
            continue;
        }
        for (di, dim) in corpus.rubric.dimensions.iter().enumerate() {
            if let Some(&score) = table.get(&(report.id.clone(), dim.id.clone())) {
                out.push((ri, di, score));
            }
        }
    }
    out
}

/// Trains the query and passage projections with Adam on mean weighted BCE,
/// keeping the parameters of the epoch with the lowest validation loss.
pub fn train_verifier(
    corpus: &Corpus,
    settings: &ProviderSettings,
    config: &VerifierConfig,
    options: &TrainingOptions,
) -> Result<(Verifier, TrainingLog)> {
    config.validate()?;
    options.validate()?;
    let mut verifier = Verifier::new(settings, config.clone())?;
    let mut log = TrainingLog::default();
    let weights = positive_weights(corpus, &mut log.warnings);
    let cache = BaseCache::build(verifier.query.base(), corpus);

    let train = labelled_pairs(corpus, Split::Train);
    if train.is_empty() {
        return Err(Error::Validation("no scored training pairs".into()));
    }
    let mut val = labelled_pairs(corpus, Split::Val);
    if val.is_empty() {
        let msg = "no validation pairs; selecting on training loss".to_string();
        log::warn!("{msg}");
        log.warnings.push(msg);
        val = train.clone();
    }
    let example = |&(ri, di, score): &(usize, usize, u8)| PairExample {
        query: &cache.queries[di],
        sentences: &cache.sentences[ri],
        label: score > 0,
        weight: weights[di],
    };

    let mut wq = verifier.query.projection().cloned().expect("identity projection");
    let mut ws = verifier.passage.projection().cloned().expect("identity projection");
    let mut adam_q = Adam::new(options.adam(), wq.len());
    let mut adam_s = Adam::new(options.adam(), ws.len());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mean_loss = |wq: &Matrix, ws: &Matrix, pairs: &[(usize, usize, u8)]| {
        pairs
            .iter()
            .map(|p| pair_loss(wq, ws, &example(p), config, None))
            .sum::<f64>()
            / pairs.len() as f64
    };

    let mut best = (mean_loss(&wq, &ws, &val), wq.clone(), ws.clone());
    log.best_epoch = 0;
    for epoch in 1..=options.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(options.batch_size) {
            let mut gq = Matrix::zeros(wq.rows, wq.cols);
            let mut gs = Matrix::zeros(ws.rows, ws.cols);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += pair_loss(&wq, &ws, &example(&train[i]), config, Some((&mut gq, &mut gs, scale)));
            }
            adam_q.step(&mut wq.data, &gq.data);
            adam_s.step(&mut ws.data, &gs.data);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = mean_loss(&wq, &ws, &val);
        log::info!("verifier epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, wq.clone(), ws.clone());
            log.best_epoch = epoch;
        }
    }
    log.best_val_loss = best.0;
    verifier.query = Encoder::new(settings.clone(), Side::Query)?.with_projection(best.1)?;
    verifier.passage = Encoder::new(settings.clone(), Side::Passage)?.with_projection(best.2)?;
    Ok((verifier, log))
}

//! Text embedding providers behind a dual-encoder interface.
//!
//! An [`Encoder`] is a frozen base provider followed by an optional trainable
//! linear projection. Query-side and passage-side encoders carry separate
//! projections, so the two sides learn different embedding spaces.
//!
//! The built-in provider is [`Provider::DeterministicTest`]: every token maps
//! to a Gaussian vector seeded by a hash of the token, and a text embeds as
//! the L2-normalized sum of its token vectors. Texts that share words are
//! similar; nothing has to be downloaded.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Report;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("embedding must have at least one component".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding has a non-finite component".into()));
        }
        Ok(Embedding { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.values)
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// A pretrained contextual encoder (SBERT, BERT, ELECTRA, ...). Needs
    /// model weights that this build does not bundle.
    PretrainedContextual,
    #[default]
    DeterministicTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Query,
    Passage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportStrategy {
    /// Encode the longest token prefix that fits the provider budget.
    #[default]
    Truncate,
    /// Mean of fixed-size, fixed-stride window embeddings over the whole text.
    MovingAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub provider: Provider,
    pub embedding_dim: usize,
    /// Token budget per encoder call.
    pub max_tokens: usize,
    /// Window size for [`ReportStrategy::MovingAverage`]; defaults to `max_tokens`.
    pub window_tokens: Option<usize>,
    /// Window stride; defaults to half the window.
    pub window_stride: Option<usize>,
    pub hash_seed: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings {
            provider: Provider::DeterministicTest,
            embedding_dim: 128,
            max_tokens: 512,
            window_tokens: None,
            window_stride: None,
            hash_seed: 0,
        }
    }
}

impl ProviderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be > 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be > 0".into()));
        }
        if self.window() == 0 || self.stride() == 0 {
            return Err(Error::Config("window size and stride must be > 0".into()));
        }
        match self.provider {
            Provider::DeterministicTest => Ok(()),
            Provider::PretrainedContextual => Err(Error::ProviderUnavailable(
                "pretrained_contextual needs external model weights; use deterministic_test".into(),
            )),
        }
    }

    pub fn window(&self) -> usize {
        self.window_tokens.unwrap_or(self.max_tokens)
    }

    pub fn stride(&self) -> usize {
        self.window_stride.unwrap_or((self.window() / 2).max(1))
    }
}

/// Identity of one side of a dual encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderHandle {
    pub provider: Provider,
    pub side: Side,
    pub params_version: String,
    pub embedding_dim: usize,
}

/// Lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// The frozen part of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseEncoder {
    settings: ProviderSettings,
}

impl BaseEncoder {
    pub fn new(settings: ProviderSettings) -> Result<Self> {
        settings.validate()?;
        Ok(BaseEncoder { settings })
    }

    pub fn settings(&self) -> &ProviderSettings {
        &self.settings
    }

    pub fn dim(&self) -> usize {
        self.settings.embedding_dim
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let seed = fnv1a(token.as_bytes()) ^ self.settings.hash_seed.rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in out.iter_mut() {
            *x += Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
    }

    /// Unit-norm embedding of already-tokenized text (no budget applied).
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        if tokens.is_empty() {
            self.token_vector("\u{0}empty", &mut v);
        }
        for t in tokens {
            self.token_vector(t.as_ref(), &mut v);
        }
        let n = linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Embeds `text`, silently truncated to the token budget. Returns whether
    /// truncation happened.
    pub fn embed(&self, text: &str) -> (Vec<f64>, bool) {
        let tokens = tokenize(text);
        let truncated = tokens.len() > self.settings.max_tokens;
        let kept = &tokens[..tokens.len().min(self.settings.max_tokens)];
        (self.embed_tokens(kept), truncated)
    }

    /// Report-level base embedding under the given strategy.
    pub fn embed_report(&self, report: &Report, strategy: ReportStrategy) -> (Vec<f64>, bool) {
        let tokens: Vec<String> = report.sentences.iter().flat_map(|s| tokenize(&s.text)).collect();
        match strategy {
            ReportStrategy::Truncate => {
                let truncated = tokens.len() > self.settings.max_tokens;
                let kept = &tokens[..tokens.len().min(self.settings.max_tokens)];
                (self.embed_tokens(kept), truncated)
            }
            ReportStrategy::MovingAverage => {
                let windows = window_ranges(tokens.len(), self.settings.window(), self.settings.stride());
                let embeddings: Vec<Vec<f64>> = windows.iter().map(|r| self.embed_tokens(&tokens[r.clone()])).collect();
                let refs: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
                (linalg::mean_of(&refs), false)
            }
        }
    }

    fn version_bytes(&self) -> Vec<u8> {
        let s = &self.settings;
        format!("{:?}|{}|{}|{}", s.provider, s.embedding_dim, s.max_tokens, s.hash_seed).into_bytes()
    }
}

/// Token ranges of fixed-size windows with a fixed stride; the last window
/// ends at the final token.
pub fn window_ranges(n_tokens: usize, window: usize, stride: usize) -> Vec<std::ops::Range<usize>> {
    if n_tokens <= window {
        return std::iter::once(0..n_tokens).collect();
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(n_tokens);
        out.push(start..end);
        if end == n_tokens {
            break;
        }
        start += stride;
    }
    out
}

/// One side of a dual encoder: base provider plus optional projection.
#[derive(Debug)]
pub struct Encoder {
    base: BaseEncoder,
    side: Side,
    projection: Option<Matrix>,
    truncated: AtomicUsize,
}

impl Clone for Encoder {
    fn clone(&self) -> Self {
        Encoder {
            base: self.base.clone(),
            side: self.side,
            projection: self.projection.clone(),
            truncated: AtomicUsize::new(self.truncated.load(Ordering::Relaxed)),
        }
    }
}

impl Encoder {
    pub fn new(settings: ProviderSettings, side: Side) -> Result<Self> {
        Ok(Encoder {
            base: BaseEncoder::new(settings)?,
            side,
            projection: None,
            truncated: AtomicUsize::new(0),
        })
    }

    pub fn with_projection(mut self, projection: Matrix) -> Result<Self> {
        if projection.cols != self.base.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.base.dim(),
                found: projection.cols,
            });
        }
        self.projection = Some(projection);
        Ok(self)
    }

    pub fn base(&self) -> &BaseEncoder {
        &self.base
    }

    pub fn projection(&self) -> Option<&Matrix> {
        self.projection.as_ref()
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection.as_ref().map_or(self.base.dim(), |p| p.rows)
    }

    pub fn handle(&self) -> EncoderHandle {
        let mut hasher = Sha256::new();
        hasher.update(self.base.version_bytes());
        if let Some(p) = &self.projection {
            hasher.update(p.rows.to_le_bytes());
            for x in &p.data {
                hasher.update(x.to_le_bytes());
            }
        }
        EncoderHandle {
            provider: self.base.settings.provider,
            side: self.side,
            params_version: hex::encode(&hasher.finalize()[..12]),
            embedding_dim: self.embedding_dim(),
        }
    }

    /// Number of inputs cut to the token budget so far.
    pub fn truncated_inputs(&self) -> usize {
        self.truncated.load(Ordering::Relaxed)
    }

    fn project(&self, base: Vec<f64>) -> Result<Embedding> {
        let values = match &self.projection {
            Some(p) => p.matvec(&base),
            None => base,
        };
        Embedding::new(values)
    }

    pub fn encode<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<Embedding>> {
        if texts.is_empty() {
            return Err(Error::Validation("encode needs at least one text".into()));
        }
        texts
            .iter()
            .map(|t| {
                let t = t.as_ref();
                if t.trim().is_empty() {
                    return Err(Error::Validation("cannot encode an empty text".into()));
                }
                let (v, truncated) = self.base.embed(t);
                if truncated {
                    self.truncated.fetch_add(1, Ordering::Relaxed);
                }
                self.project(v)
            })
            .collect()
    }

    pub fn encode_report(&self, report: &Report, strategy: ReportStrategy) -> Result<Embedding> {
        if report.sentences.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let (v, truncated) = self.base.embed_report(report, strategy);
        if truncated {
            self.truncated.fetch_add(1, Ordering::Relaxed);
            log::debug!(
                "report `{}` truncated to {} tokens",
                report.id,
                self.base.settings.max_tokens
            );
        }
        self.project(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    fn encoder() -> Encoder {
        Encoder::new(ProviderSettings::default(), Side::Passage).unwrap()
    }

    #[test]
    fn same_text_same_embedding() {
        let e = encoder().encode(&["a", "a"]).unwrap();
        assert_eq!(e[0], e[1]);
    }

    #[test]
    fn test_provider_is_stable_and_unit_norm() {
        let a = encoder().encode(&["pendulum"]).unwrap();
        let b = encoder().encode(&["pendulum"]).unwrap();
        assert_eq!(a, b);
        assert!((a[0].norm() - 1.0).abs() < 1e-6);
        // frozen reference values: changing them changes every checkpoint
        let v = &a[0].values;
        assert_eq!(v.len(), 128);
        let again = Encoder::new(ProviderSettings::default(), Side::Query).unwrap();
        assert_eq!(again.encode(&["pendulum"]).unwrap()[0].values, *v);
    }

    #[test]
    fn pretrained_provider_is_reported_unavailable() {
        let settings = ProviderSettings {
            provider: Provider::PretrainedContextual,
            ..Default::default()
        };
        assert!(matches!(
            Encoder::new(settings, Side::Query),
            Err(Error::ProviderUnavailable(_))
        ));
    }

    #[test]
    fn shared_words_raise_similarity() {
        let e = encoder()
            .encode(&[
                "the hypothesis predicts",
                "our hypothesis predicts growth",
                "a wooden bench",
            ])
            .unwrap();
        let related = linalg::dot(&e[0].values, &e[1].values);
        let unrelated = linalg::dot(&e[0].values, &e[2].values);
        assert!(related > 0.5 && unrelated.abs() < 0.35, "{related} {unrelated}");
    }

    #[test]
    fn window_ranges_cover_text() {
        assert_eq!(window_ranges(5, 10, 5), vec![0..5]);
        assert_eq!(window_ranges(20, 10, 10), vec![0..10, 10..20]);
        assert_eq!(window_ranges(25, 10, 10), vec![0..10, 10..20, 20..25]);
        assert_eq!(window_ranges(12, 10, 5), vec![0..10, 5..12]);
    }

    #[test]
    fn truncation_counts_and_never_errors() {
        let settings = ProviderSettings {
            max_tokens: 4,
            ..Default::default()
        };
        let enc = Encoder::new(settings, Side::Passage).unwrap();
        let long = enc.encode(&["one two three four five six"]).unwrap();
        let prefix = enc.encode(&["one two three four"]).unwrap();
        assert_eq!(long, prefix);
        assert_eq!(enc.truncated_inputs(), 1);
    }

    #[test]
    fn projection_changes_version_and_dim() {
        let plain = encoder();
        let projected = encoder().with_projection(Matrix::zeros(16, 128)).unwrap();
        assert_ne!(plain.handle().params_version, projected.handle().params_version);
        assert_eq!(projected.handle().embedding_dim, 16);
        assert!(encoder().with_projection(Matrix::zeros(16, 7)).is_err());
    }

    #[test]
    fn single_sentence_report_matches_sentence_encoding() {
        let report = Report::new("r", "The bob swung twice.", Split::Train).unwrap();
        let enc = encoder();
        let sent = enc.encode(&["The bob swung twice."]).unwrap().remove(0);
        for strategy in [ReportStrategy::Truncate, ReportStrategy::MovingAverage] {
            assert_eq!(enc.encode_report(&report, strategy).unwrap(), sent);
        }
    }
}

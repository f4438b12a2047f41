//! Rubrics, reports, scores and the JSONL corpus format.
//!
//! A corpus file holds one JSON object per line, discriminated by `kind`:
//!
//! ```text
//! {"kind":"rubric","id":"lab1","dimensions":[{"id":"d1","index":1,"query_text":"..."}]}
//! {"kind":"report","id":"r1","text":"...","split":"train"}
//! {"kind":"score","report_id":"r1","dimension_id":"d1","score":3}
//! {"kind":"selection","report_id":"r1","dimension_id":"d1","rater_id":"a","positions":[0,4]}
//! ```
//!
//! The rubric line must precede every score line. Reports are segmented into
//! sentences on load with [`segment_sentences`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMode {
    /// Ordinal score in 0..=5.
    #[default]
    Scored,
    /// Present / absent only (essay mode).
    Presence,
}

impl DimensionMode {
    pub fn max_score(self) -> u8 {
        match self {
            DimensionMode::Scored => 5,
            DimensionMode::Presence => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DimensionMode::Scored => "scored",
            DimensionMode::Presence => "presence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricDimension {
    pub id: String,
    /// 1-based.
    pub index: usize,
    pub query_text: String,
    pub max_score: u8,
    pub mode: DimensionMode,
}

impl RubricDimension {
    pub fn new(id: impl Into<String>, index: usize, query_text: impl Into<String>, mode: DimensionMode) -> Self {
        RubricDimension {
            id: id.into(),
            index,
            query_text: query_text.into(),
            max_score: mode.max_score(),
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub id: String,
    pub dimensions: Vec<RubricDimension>,
    pub total_max: u32,
}

impl Rubric {
    pub fn new(id: impl Into<String>, dimensions: Vec<RubricDimension>) -> Result<Self> {
        let total_max = dimensions.iter().map(|d| d.max_score as u32).sum();
        let rubric = Rubric {
            id: id.into(),
            dimensions,
            total_max,
        };
        rubric.validate()?;
        Ok(rubric)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Validation(format!("rubric `{}` has no dimensions", self.id)));
        }
        let mut ids = BTreeSet::new();
        for (i, dim) in self.dimensions.iter().enumerate() {
            if dim.index != i + 1 {
                return Err(Error::Validation(format!(
                    "rubric `{}`: dimension `{}` has index {}, expected {}",
                    self.id,
                    dim.id,
                    dim.index,
                    i + 1
                )));
            }
            if !ids.insert(dim.id.as_str()) {
                return Err(Error::Validation(format!("duplicate dimension id `{}`", dim.id)));
            }
            if dim.query_text.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "dimension `{}` has empty query text",
                    dim.id
                )));
            }
            if dim.max_score != dim.mode.max_score() {
                return Err(Error::Validation(format!(
                    "dimension `{}`: max_score {} does not match mode {}",
                    dim.id,
                    dim.max_score,
                    dim.mode.as_str()
                )));
            }
        }
        let expected: u32 = self.dimensions.iter().map(|d| d.max_score as u32).sum();
        if self.total_max != expected {
            return Err(Error::Validation(format!(
                "rubric `{}`: total_max {} != {}",
                self.id, self.total_max, expected
            )));
        }
        Ok(())
    }

    /// Mode shared by every dimension; mixed rubrics are rejected at load.
    pub fn mode(&self) -> DimensionMode {
        self.dimensions.first().map(|d| d.mode).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn dimension(&self, id: &str) -> Option<&RubricDimension> {
        self.dimensions.iter().find(|d| d.id == id)
    }

    /// 0-based slot of a dimension id.
    pub fn slot(&self, id: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub position: usize,
    pub text: String,
    /// Byte span of `text` within the report's raw text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub raw_text: String,
    pub sentences: Vec<Sentence>,
    pub split: Split,
    pub assignment_id: String,
}

impl Report {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, split: Split) -> Result<Self> {
        let raw_text = raw_text.into();
        let sentences = segment_sentences(&raw_text)?;
        Ok(Report {
            id: id.into(),
            raw_text,
            sentences,
            split,
            assignment_id: String::new(),
        })
    }

    pub fn with_assignment(mut self, assignment_id: impl Into<String>) -> Self {
        self.assignment_id = assignment_id.into();
        self
    }

    pub fn sentence_texts(&self) -> Vec<&str> {
        self.sentences.iter().map(|s| s.text.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub report_id: String,
    pub dimension_id: String,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSelection {
    pub report_id: String,
    pub dimension_id: String,
    pub rater_id: String,
    pub positions: BTreeSet<usize>,
}

// ---------------------------------------------------------------------------
// Sentence segmentation
// ---------------------------------------------------------------------------

/// Tokens that end in a period without ending a sentence (compared lowercase,
/// without the final period).
const ABBREVIATIONS: &[&str] = &[
    "fig", "figs", "eq", "eqs", "vs", "e.g", "i.e", "cf", "al", "approx", "dr", "mr", "mrs", "ms", "prof", "no", "sec",
    "tab", "ref", "refs", "st", "jr", "sr", "ca", "resp", "vol", "pp",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '”', '’'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '“', '‘'];

/// Rule-based sentence splitter.
///
/// Breaks after `.`, `!` or `?` (plus any closing quotes or brackets) when the
/// next non-space character starts a new sentence (uppercase letter, digit or
/// opening quote/bracket), and at blank lines. A period after a known
/// abbreviation or a single-letter initial does not break.
pub fn segment_sentences(raw_text: &str) -> Result<Vec<Sentence>> {
    if raw_text.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }
    let chars: Vec<(usize, char)> = raw_text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional spaces/tabs, newline
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, ' ' | '\t' | '\r') {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                spans.push((start, chars[i].0));
                start = chars[j].0;
                i = j + 1;
                continue;
            }
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || CLOSERS.contains(&chars[j].1)) {
                j += 1;
            }
            let end_byte = chars.get(j).map_or(raw_text.len(), |&(b, _)| b);
            if j >= chars.len() {
                spans.push((start, end_byte));
                start = end_byte;
                i = j;
                continue;
            }
            if chars[j].1.is_whitespace() {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                let opens_sentence = chars
                    .get(k)
                    .is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit() || OPENERS.contains(&n));
                if opens_sentence && !(c == '.' && is_abbreviation(raw_text, &chars, i)) {
                    spans.push((start, end_byte));
                    start = end_byte;
                }
            }
            i = j;
            continue;
        }
        i += 1;
    }
    spans.push((start, raw_text.len()));

    let mut sentences = Vec::new();
    for (s, e) in spans {
        let slice = &raw_text[s..e];
        let trimmed = slice.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = slice.len() - slice.trim_start().len();
        let begin = s + lead;
        sentences.push(Sentence {
            position: sentences.len(),
            text: trimmed.to_string(),
            start: begin,
            end: begin + trimmed.len(),
        });
    }
    Ok(sentences)
}

/// Is the word ending at the period `chars[period]` an abbreviation or initial?
fn is_abbreviation(raw: &str, chars: &[(usize, char)], period: usize) -> bool {
    let mut k = period;
    while k > 0 && !chars[k - 1].1.is_whitespace() {
        k -= 1;
    }
    let word = raw[chars[k].0..chars[period].0].trim_start_matches(|c: char| OPENERS.contains(&c));
    if word.is_empty() {
        return false;
    }
    let mut letters = word.chars();
    if let (Some(first), None) = (letters.next(), letters.next()) {
        if first.is_uppercase() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

// ---------------------------------------------------------------------------
// Corpus and JSONL I/O
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub rubric: Rubric,
    pub reports: Vec<Report>,
    pub scores: Vec<DimensionScore>,
    pub selections: Vec<SentenceSelection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Rubric {
        id: String,
        dimensions: Vec<DimensionRecord>,
    },
    Report {
        id: String,
        text: String,
        #[serde(default)]
        split: Split,
        #[serde(default)]
        assignment_id: String,
    },
    Score {
        report_id: String,
        dimension_id: String,
        score: i64,
    },
    Selection {
        report_id: String,
        dimension_id: String,
        rater_id: String,
        positions: Vec<usize>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct DimensionRecord {
    id: String,
    index: usize,
    query_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_score: Option<u8>,
    #[serde(default)]
    mode: DimensionMode,
}

fn for_each_record(path: &Path, mut f: impl FnMut(usize, Record) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(Error::at_path(path))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::at_path(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: n + 1,
            message: e.to_string(),
        })?;
        f(n + 1, record)?;
    }
    Ok(())
}

impl Corpus {
    /// Streams a JSONL corpus line by line.
    pub fn load(path: impl AsRef<Path>) -> Result<Corpus> {
        let path = path.as_ref();
        let file = File::open(path).map_err(Error::at_path(path))?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Corpus> {
        let mut rubric: Option<Rubric> = None;
        let mut reports = Vec::new();
        let mut scores = Vec::new();
        let mut selections = Vec::new();
        let mut seen_reports = BTreeSet::new();
        let mut seen_scores = BTreeSet::new();

        for (n, line) in reader.lines().enumerate() {
            let line_no = n + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| Error::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
            match record {
                Record::Rubric { id, dimensions } => {
                    if rubric.is_some() {
                        return Err(Error::Schema {
                            line: line_no,
                            message: "second rubric record".into(),
                        });
                    }
                    let dims = dimensions
                        .into_iter()
                        .map(|d| RubricDimension {
                            max_score: d.max_score.unwrap_or(d.mode.max_score()),
                            id: d.id,
                            index: d.index,
                            query_text: d.query_text,
                            mode: d.mode,
                        })
                        .collect::<Vec<_>>();
                    if dims.windows(2).any(|w| w[0].mode != w[1].mode) {
                        return Err(Error::Validation(format!(
                            "rubric `{id}` mixes scored and presence dimensions"
                        )));
                    }
                    rubric = Some(Rubric::new(id, dims)?);
                }
                Record::Report {
                    id,
                    text,
                    split,
                    assignment_id,
                } => {
                    if !seen_reports.insert(id.clone()) {
                        return Err(Error::Validation(format!("duplicate report `{id}` (line {line_no})")));
                    }
                    let report = Report::new(id, text, split)
                        .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?
                        .with_assignment(assignment_id);
                    reports.push(report);
                }
                Record::Score {
                    report_id,
                    dimension_id,
                    score,
                } => {
                    let rubric = rubric.as_ref().ok_or(Error::Schema {
                        line: line_no,
                        message: "score record before rubric record".into(),
                    })?;
                    let dim = rubric.dimension(&dimension_id).ok_or_else(|| {
                        Error::Validation(format!(
                            "score for report `{report_id}` (line {line_no}) names unknown dimension `{dimension_id}`"
                        ))
                    })?;
                    if score < 0 || score > dim.max_score as i64 {
                        return Err(Error::Validation(format!(
                            "score {score} for report `{report_id}`, dimension `{dimension_id}` (line {line_no}) outside 0..={}",
                            dim.max_score
                        )));
                    }
                    if !seen_scores.insert((report_id.clone(), dimension_id.clone())) {
                        return Err(Error::Validation(format!(
                            "duplicate score for report `{report_id}`, dimension `{dimension_id}` (line {line_no})"
                        )));
                    }
                    scores.push(DimensionScore {
                        report_id,
                        dimension_id,
                        score: score as u8,
                    });
                }
                Record::Selection {
                    report_id,
                    dimension_id,
                    rater_id,
                    positions,
                } => selections.push(SentenceSelection {
                    report_id,
                    dimension_id,
                    rater_id,
                    positions: positions.into_iter().collect(),
                }),
            }
        }

        let rubric = rubric.ok_or_else(|| Error::Validation("corpus has no rubric record".into()))?;
        let corpus = Corpus {
            rubric,
            reports,
            scores,
            selections,
        };
        corpus.validate_references()?;
        Ok(corpus)
    }

    /// Reports from a JSONL file, ignoring every other record kind. Unlike
    /// [`Corpus::load`] no rubric line is needed.
    pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<Report>> {
        let mut reports = Vec::new();
        let mut seen = BTreeSet::new();
        for_each_record(path.as_ref(), |line_no, record| {
            if let Record::Report {
                id,
                text,
                split,
                assignment_id,
            } = record
            {
                if !seen.insert(id.clone()) {
                    return Err(Error::Validation(format!("duplicate report `{id}` (line {line_no})")));
                }
                let report = Report::new(id, text, split)
                    .map_err(|e| Error::Validation(format!("line {line_no}: {e}")))?
                    .with_assignment(assignment_id);
                reports.push(report);
            }
            Ok(())
        })?;
        Ok(reports)
    }

    /// Selection records from a JSONL file, ignoring every other kind.
    pub fn load_selections(path: impl AsRef<Path>) -> Result<Vec<SentenceSelection>> {
        let mut selections = Vec::new();
        for_each_record(path.as_ref(), |_, record| {
            if let Record::Selection {
                report_id,
                dimension_id,
                rater_id,
                positions,
            } = record
            {
                selections.push(SentenceSelection {
                    report_id,
                    dimension_id,
                    rater_id,
                    positions: positions.into_iter().collect(),
                });
            }
            Ok(())
        })?;
        Ok(selections)
    }

    fn validate_references(&self) -> Result<()> {
        let by_id: BTreeMap<&str, &Report> = self.reports.iter().map(|r| (r.id.as_str(), r)).collect();
        for s in &self.scores {
            if !by_id.contains_key(s.report_id.as_str()) {
                return Err(Error::Validation(format!(
                    "score references unknown report `{}`",
                    s.report_id
                )));
            }
        }
        for sel in &self.selections {
            if self.rubric.dimension(&sel.dimension_id).is_none() {
                return Err(Error::Validation(format!(
                    "selection by `{}` names unknown dimension `{}`",
                    sel.rater_id, sel.dimension_id
                )));
            }
            // Selections may be shipped without their reports (agreement-only files).
            if let Some(report) = by_id.get(sel.report_id.as_str()) {
                if let Some(&bad) = sel.positions.iter().find(|&&p| p >= report.sentences.len()) {
                    return Err(Error::Validation(format!(
                        "selection by `{}` on report `{}` names sentence {} of {}",
                        sel.rater_id,
                        sel.report_id,
                        bad,
                        report.sentences.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(Error::at_path(path))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(Error::at_path(path))?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let rubric = Record::Rubric {
            id: self.rubric.id.clone(),
            dimensions: self
                .rubric
                .dimensions
                .iter()
                .map(|d| DimensionRecord {
                    id: d.id.clone(),
                    index: d.index,
                    query_text: d.query_text.clone(),
                    max_score: Some(d.max_score),
                    mode: d.mode,
                })
                .collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&rubric)?)?;
        for r in &self.reports {
            let rec = Record::Report {
                id: r.id.clone(),
                text: r.raw_text.clone(),
                split: r.split,
                assignment_id: r.assignment_id.clone(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        for s in &self.scores {
            let rec = Record::Score {
                report_id: s.report_id.clone(),
                dimension_id: s.dimension_id.clone(),
                score: s.score as i64,
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        for sel in &self.selections {
            let rec = Record::Selection {
                report_id: sel.report_id.clone(),
                dimension_id: sel.dimension_id.clone(),
                rater_id: sel.rater_id.clone(),
                positions: sel.positions.iter().copied().collect(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
        Ok(())
    }

    pub fn reports_in(&self, split: Split) -> impl Iterator<Item = &Report> {
        self.reports.iter().filter(move |r| r.split == split)
    }

    /// `(report_id, dimension_id) -> score`
    pub fn score_table(&self) -> BTreeMap<(String, String), u8> {
        self.scores
            .iter()
            .map(|s| ((s.report_id.clone(), s.dimension_id.clone()), s.score))
            .collect()
    }

    /// Scores of one report in rubric order; fails if any dimension is unscored.
    pub fn scores_for(&self, table: &BTreeMap<(String, String), u8>, report: &Report) -> Result<Vec<u8>> {
        self.rubric
            .dimensions
            .iter()
            .map(|d| {
                table
                    .get(&(report.id.clone(), d.id.clone()))
                    .copied()
                    .ok_or_else(|| Error::IncompleteReport {
                        report_id: report.id.clone(),
                        dimension_id: d.id.clone(),
                    })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// Shape of the per-dimension score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSkew {
    Uniform,
    /// Odd dimensions lean towards low scores, even ones towards high scores.
    #[default]
    Polarized,
}

impl ScoreSkew {
    fn weights(self, dim_index: usize) -> [f64; 6] {
        match self {
            ScoreSkew::Uniform => [1.0; 6],
            ScoreSkew::Polarized if dim_index % 2 == 1 => [0.34, 0.2, 0.16, 0.12, 0.1, 0.08],
            ScoreSkew::Polarized => [0.08, 0.1, 0.12, 0.16, 0.2, 0.34],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_reports: usize,
    pub n_dims: usize,
    pub mode: DimensionMode,
    pub skew: ScoreSkew,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_reports: usize, n_dims: usize) -> Self {
        SyntheticConfig {
            seed,
            n_reports,
            n_dims,
            mode: DimensionMode::Scored,
            skew: ScoreSkew::default(),
            train_fraction: 0.8,
            val_fraction: 0.1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_reports < 10 {
            return Err(Error::Config(format!(
                "n_reports must be >= 10, got {}",
                self.n_reports
            )));
        }
        if !(2..=8).contains(&self.n_dims) {
            return Err(Error::Config(format!("n_dims must be in 2..=8, got {}", self.n_dims)));
        }
        let fractions_ok =
            self.train_fraction > 0.0 && self.val_fraction >= 0.0 && self.train_fraction + self.val_fraction <= 1.0;
        if !fractions_ok {
            return Err(Error::Config(
                "split fractions must be positive and sum to at most 1".into(),
            ));
        }
        Ok(())
    }
}

struct Family {
    id: &'static str,
    query: &'static str,
    keywords: &'static [&'static str],
}

const FAMILIES: [Family; 8] = [
    Family {
        id: "research_question",
        query: "States the research question and the aim or purpose the experiment will investigate.",
        keywords: &["question", "aim", "purpose", "investigate", "objective", "inquiry"],
    },
    Family {
        id: "hypothesis",
        query: "Gives a hypothesis that predicts and explains what outcome to expect.",
        keywords: &[
            "hypothesis",
            "predict",
            "expect",
            "prediction",
            "anticipate",
            "conjecture",
        ],
    },
    Family {
        id: "variables",
        query: "Identifies the independent, dependent and controlled variable of the experiment.",
        keywords: &[
            "variable",
            "independent",
            "dependent",
            "controlled",
            "manipulated",
            "constant",
        ],
    },
    Family {
        id: "theory",
        query: "Presents the theoretical equation or formula and the law or model behind it.",
        keywords: &["equation", "formula", "theoretical", "law", "model", "derivation"],
    },
    Family {
        id: "procedure",
        query: "Describes the procedure, apparatus and setup with clear method steps.",
        keywords: &["procedure", "apparatus", "setup", "method", "steps", "protocol"],
    },
    Family {
        id: "data",
        query: "Reports recorded data and measurements in a table or graph across trials.",
        keywords: &["data", "table", "graph", "measurements", "trials", "recorded"],
    },
    Family {
        id: "error_sources",
        query: "Discusses sources of error, uncertainty and systematic deviation.",
        keywords: &["error", "uncertainty", "systematic", "deviation", "imprecision", "bias"],
    },
    Family {
        id: "conclusion",
        query: "Draws a conclusion that summarizes the findings and whether they support the claim.",
        keywords: &["conclusion", "conclude", "summary", "findings", "support", "confirmed"],
    },
];

const NOUNS: &[&str] = &[
    "pendulum",
    "string",
    "bob",
    "stopwatch",
    "ruler",
    "bench",
    "clamp",
    "stand",
    "cart",
    "track",
    "spring",
    "ball",
    "ramp",
    "partner",
    "room",
    "window",
    "notebook",
    "pencil",
    "scale",
    "weight",
    "hook",
    "floor",
    "teacher",
    "group",
    "lab",
    "sensor",
    "laptop",
    "tape",
    "marker",
    "wall",
];
const VERBS: &[&str] = &[
    "swung", "moved", "rested", "touched", "slid", "bounced", "held", "placed", "released", "watched", "checked",
    "noticed", "adjusted", "carried", "attached", "timed", "lifted", "dropped",
];
const ADJECTIVES: &[&str] = &[
    "small", "heavy", "long", "short", "metal", "wooden", "red", "quiet", "old", "new", "bright", "narrow", "steady",
    "loose",
];

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

fn distractor_sentence(rng: &mut ChaCha8Rng) -> String {
    let (a, n1, v, n2) = (
        pick(rng, ADJECTIVES),
        pick(rng, NOUNS),
        pick(rng, VERBS),
        pick(rng, NOUNS),
    );
    match rng.random_range(0..4) {
        0 => format!("The {a} {n1} {v} the {n2}."),
        1 => format!("We {v} the {n1} near the {a} {n2}."),
        2 => {
            let count = rng.random_range(2..40);
            let secs = rng.random_range(10..99) as f64 / 10.0;
            format!("The {n1} {v} {count} times in {secs:.1} seconds.")
        }
        _ => format!("Then the {a} {n1} was {v} beside the {n2}."),
    }
}

fn keyword_sentence(rng: &mut ChaCha8Rng, family: &Family) -> String {
    let mut kws: Vec<&str> = family.keywords.to_vec();
    kws.shuffle(rng);
    let (k1, k2) = (kws[0], kws[1]);
    let (n1, v) = (pick(rng, NOUNS), pick(rng, VERBS));
    match rng.random_range(0..4) {
        0 => format!("Our {k1} concerned the {n1} and its {k2}."),
        1 => format!("The {k1} of the {n1} {v} with a clear {k2}."),
        2 => format!("In this lab the {k1} and {k2} {v} the {n1}."),
        _ => format!("{} {v} the {n1} as part of the {k2}.", capitalize(&format!("the {k1}"))),
    }
}

/// Builds a reproducible corpus whose scores are learnable from text.
///
/// Every dimension owns a keyword family. A report's ground-truth score on a
/// dimension equals the number of sentences built from that family's
/// keywords (at most 5); the remaining sentences are keyword-free
/// distractors. In presence mode the score is 1 when any keyword sentence
/// exists.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims: Vec<RubricDimension> = FAMILIES[..config.n_dims]
        .iter()
        .enumerate()
        .map(|(i, f)| RubricDimension::new(f.id, i + 1, f.query, config.mode))
        .collect();
    let rubric = Rubric::new(format!("synthetic-{}-{}", config.mode.as_str(), config.n_dims), dims)?;

    let n_train = (config.n_reports as f64 * config.train_fraction).floor() as usize;
    let n_val = (config.n_reports as f64 * config.val_fraction).round() as usize;
    let assignment = format!("synthetic-{}", config.seed);

    let mut reports = Vec::with_capacity(config.n_reports);
    let mut scores = Vec::with_capacity(config.n_reports * config.n_dims);
    for r in 0..config.n_reports {
        let id = format!("r{:05}", r + 1);
        let mut sentences = Vec::new();
        let mut report_scores = Vec::with_capacity(config.n_dims);
        for (d, family) in FAMILIES[..config.n_dims].iter().enumerate() {
            let count = match config.mode {
                DimensionMode::Scored => sample_weighted(&mut rng, &config.skew.weights(d + 1)),
                DimensionMode::Presence => {
                    if rng.random_bool(0.5) {
                        rng.random_range(1..=2)
                    } else {
                        0
                    }
                }
            };
            for _ in 0..count {
                sentences.push(keyword_sentence(&mut rng, family));
            }
            let score = match config.mode {
                DimensionMode::Scored => count.min(5),
                DimensionMode::Presence => count.min(1),
            };
            report_scores.push(score as u8);
        }
        let target = rng.random_range(18..=32usize);
        let n_distractors = target.saturating_sub(sentences.len()).max(3);
        for _ in 0..n_distractors {
            sentences.push(distractor_sentence(&mut rng));
        }
        sentences.shuffle(&mut rng);
        let text = join_paragraphs(&mut rng, &sentences);
        let split = if r < n_train {
            Split::Train
        } else if r < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        reports.push(Report::new(id.clone(), text, split)?.with_assignment(assignment.clone()));
        for (dim, score) in rubric.dimensions.iter().zip(report_scores) {
            scores.push(DimensionScore {
                report_id: id.clone(),
                dimension_id: dim.id.clone(),
                score,
            });
        }
    }
    Ok(Corpus {
        rubric,
        reports,
        scores,
        selections: Vec::new(),
    })
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64; 6]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn join_paragraphs(rng: &mut ChaCha8Rng, sentences: &[String]) -> String {
    let mut text = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.random_range(0..8) == 0 { "\n\n" } else { " " });
        }
        text.push_str(s);
    }
    text
}

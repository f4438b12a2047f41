//! Evaluation and agreement metrics.
//!
//! Total-score metrics (MSE, interval alpha, weighted accuracy), per-dimension
//! agreement (Spearman averaged over reports, interval alpha averaged over
//! dimensions), binary verifier metrics, Krippendorff's alpha with the MASI
//! set distance for sentence-selection agreement, and a percentile bootstrap.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Rubric, SentenceSelection};
use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::Validation("metric needs at least one item".into()));
    }
    Ok(())
}

/// Sum of one report's dimension scores, in any order.
pub fn total_score(rubric: &Rubric, report_id: &str, scores: &[(String, u8)]) -> Result<u32> {
    let by_dim: BTreeMap<&str, u8> = scores.iter().map(|(d, s)| (d.as_str(), *s)).collect();
    rubric
        .dimensions
        .iter()
        .map(|d| {
            by_dim
                .get(d.id.as_str())
                .map(|&s| s as u32)
                .ok_or_else(|| Error::IncompleteReport {
                    report_id: report_id.to_string(),
                    dimension_id: d.id.clone(),
                })
        })
        .sum()
}

pub fn mse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    same_len(preds.len(), truths.len())?;
    Ok(preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64)
}

/// How the weighted-accuracy formula is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightedAccuracyReading {
    /// `1 - |g - y| / max_distance`
    #[default]
    Normalized,
    /// `(1 - |g - y|) / max_distance`, kept for comparison only.
    Literal,
}

pub fn weighted_accuracy(
    preds: &[f64],
    truths: &[f64],
    max_distance: f64,
    reading: WeightedAccuracyReading,
) -> Result<f64> {
    same_len(preds.len(), truths.len())?;
    if max_distance.is_nan() || max_distance <= 0.0 {
        return Err(Error::Validation("max_distance must be > 0".into()));
    }
    let mut total = 0.0;
    for (g, y) in preds.iter().zip(truths) {
        let d = (g - y).abs();
        if d > max_distance {
            return Err(Error::Validation(format!(
                "|{g} - {y}| exceeds max distance {max_distance}"
            )));
        }
        total += match reading {
            WeightedAccuracyReading::Normalized => 1.0 - d / max_distance,
            WeightedAccuracyReading::Literal => (1.0 - d) / max_distance,
        };
    }
    Ok(total / preds.len() as f64)
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha
// ---------------------------------------------------------------------------

fn check_matrix<T>(ratings: &[Vec<Option<T>>]) -> Result<usize> {
    if ratings.len() < 2 {
        return Err(Error::Validation(format!(
            "alpha needs at least 2 raters, got {}",
            ratings.len()
        )));
    }
    let items = ratings[0].len();
    if let Some(bad) = ratings.iter().find(|r| r.len() != items) {
        return Err(Error::LengthMismatch {
            left: items,
            right: bad.len(),
        });
    }
    Ok(items)
}

/// Values of each unit with at least two ratings.
fn pairable_units<T: Clone>(ratings: &[Vec<Option<T>>], items: usize) -> Vec<Vec<T>> {
    (0..items)
        .map(|i| ratings.iter().filter_map(|r| r[i].clone()).collect::<Vec<T>>())
        .filter(|u| u.len() >= 2)
        .collect()
}

/// Krippendorff's alpha for any value type and distance, computed from the
/// coincidence matrix of distinct values. `ratings` is raters × items with
/// `None` for missing ratings. Zero expected disagreement yields 1.0.
pub fn krippendorff_alpha<T, D>(ratings: &[Vec<Option<T>>], distance: D) -> Result<f64>
where
    T: Ord + Clone,
    D: Fn(&T, &T) -> f64,
{
    let items = check_matrix(ratings)?;
    let units = pairable_units(ratings, items);
    if units.is_empty() {
        return Err(Error::UndefinedMetric("no item has two or more ratings".into()));
    }
    let mut coincidence: BTreeMap<(T, T), f64> = BTreeMap::new();
    for unit in &units {
        let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
        for v in unit {
            *counts.entry(v).or_default() += 1;
        }
        let m = unit.len() as f64;
        for (c, &nc) in &counts {
            for (k, &nk) in &counts {
                let pairs = if c == k { nc * (nc - 1) } else { nc * nk };
                if pairs > 0 {
                    *coincidence.entry(((*c).clone(), (*k).clone())).or_default() += pairs as f64 / (m - 1.0);
                }
            }
        }
    }
    let mut marginals: BTreeMap<T, f64> = BTreeMap::new();
    for ((c, _), o) in &coincidence {
        *marginals.entry(c.clone()).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().map(|((c, k), o)| o * distance(c, k)).sum::<f64>() / n;
    let mut expected = 0.0;
    for (c, nc) in &marginals {
        for (k, nk) in &marginals {
            if c != k {
                expected += nc * nk * distance(c, k);
            }
        }
    }
    expected /= n * (n - 1.0);
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// Interval (squared-difference) alpha using per-unit moment sums.
pub fn krippendorff_alpha_interval(ratings: &[Vec<Option<f64>>]) -> Result<f64> {
    let items = check_matrix(ratings)?;
    if ratings.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation("ratings must be finite".into()));
    }
    let units = pairable_units(ratings, items);
    if units.is_empty() {
        return Err(Error::UndefinedMetric("no item has two or more ratings".into()));
    }
    // Σ_{i≠j} (a_i - a_j)² = 2 (m Σa² - (Σa)²)
    let spread = |vals: &[f64]| {
        let m = vals.len() as f64;
        let s: f64 = vals.iter().sum();
        let s2: f64 = vals.iter().map(|v| v * v).sum();
        2.0 * (m * s2 - s * s)
    };
    let n: f64 = units.iter().map(|u| u.len() as f64).sum();
    let observed = units.iter().map(|u| spread(u) / (u.len() as f64 - 1.0)).sum::<f64>() / n;
    let all: Vec<f64> = units.concat();
    let expected = spread(&all) / (n * (n - 1.0));
    if expected <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - observed / expected)
}

/// `1 - MASI(a, b)`; two empty sets are at distance 0.
pub fn masi_distance(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    let monotonicity = if a == b {
        1.0
    } else if a.is_subset(b) || b.is_subset(a) {
        2.0 / 3.0
    } else if inter > 0.0 {
        1.0 / 3.0
    } else {
        0.0
    };
    1.0 - (inter / union) * monotonicity
}

pub type SelectionMatrix = Vec<Vec<Option<BTreeSet<usize>>>>;

/// Rater × item matrix of selected-sentence sets; items are
/// (report, dimension) pairs in sorted order, raters sorted by id.
pub fn selection_matrix(selections: &[SentenceSelection]) -> (Vec<String>, SelectionMatrix) {
    let raters: BTreeSet<&str> = selections.iter().map(|s| s.rater_id.as_str()).collect();
    let items: BTreeSet<(&str, &str)> = selections
        .iter()
        .map(|s| (s.report_id.as_str(), s.dimension_id.as_str()))
        .collect();
    let item_index: BTreeMap<(&str, &str), usize> = items.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let rater_ids: Vec<String> = raters.iter().map(|r| r.to_string()).collect();
    let mut matrix = vec![vec![None; items.len()]; rater_ids.len()];
    for s in selections {
        let r = rater_ids
            .iter()
            .position(|id| id == &s.rater_id)
            .expect("collected above");
        let i = item_index[&(s.report_id.as_str(), s.dimension_id.as_str())];
        matrix[r][i] = Some(s.positions.clone());
    }
    (rater_ids, matrix)
}

/// Alpha with MASI distance over per-(report, dimension) sentence selections.
pub fn masi_alpha(selections: &[SentenceSelection]) -> Result<f64> {
    let (raters, matrix) = selection_matrix(selections);
    if raters.len() < 2 {
        return Err(Error::Validation(format!(
            "agreement needs at least 2 raters, got {}",
            raters.len()
        )));
    }
    krippendorff_alpha(&matrix, masi_distance)
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho, or `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Ok(None);
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanSummary {
    pub mean: f64,
    /// Population standard deviation across reports.
    pub sd: f64,
    pub reports_used: usize,
    pub reports_skipped: usize,
}

/// Spearman per report over its dimension vector, then mean and sd.
pub fn per_dimension_spearman(preds_by_report: &[Vec<f64>], truths_by_report: &[Vec<f64>]) -> Result<SpearmanSummary> {
    same_len(preds_by_report.len(), truths_by_report.len())?;
    let mut rhos = Vec::new();
    for (p, t) in preds_by_report.iter().zip(truths_by_report) {
        if let Some(rho) = spearman(p, t)? {
            rhos.push(rho);
        }
    }
    let skipped = preds_by_report.len() - rhos.len();
    if skipped > 0 {
        log::warn!("{skipped} report(s) with constant dimension scores skipped in Spearman");
    }
    if rhos.is_empty() {
        return Err(Error::UndefinedMetric(
            "every report has a constant dimension vector".into(),
        ));
    }
    let n = rhos.len() as f64;
    let mean = rhos.iter().sum::<f64>() / n;
    let sd = (rhos.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    Ok(SpearmanSummary {
        mean,
        sd,
        reports_used: rhos.len(),
        reports_skipped: skipped,
    })
}

// ---------------------------------------------------------------------------
// Binary metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

/// Micro-averaged confusion-matrix metrics with "non-zero" as the positive class.
pub fn verifier_binary_metrics(decisions: &[bool], labels: &[bool]) -> Result<BinaryMetrics> {
    same_len(decisions.len(), labels.len())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics {
        accuracy: ratio(tp + tn, decisions.len()),
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

/// Accuracy of always predicting the more frequent label.
pub fn majority_baseline_accuracy(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Validation("metric needs at least one item".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok(pos.max(labels.len() - pos) as f64 / labels.len() as f64)
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over `n_units` resampled with replacement. `metric`
/// receives the resampled unit indices; non-finite resample values are dropped.
pub fn bootstrap_ci<F>(n_units: usize, metric: F, n_resamples: usize, seed: u64, level: f64) -> Result<(f64, f64)>
where
    F: Fn(&[usize]) -> f64,
{
    if n_resamples < 100 {
        return Err(Error::Config(format!(
            "bootstrap needs >= 100 resamples, got {n_resamples}"
        )));
    }
    if n_units == 0 {
        return Err(Error::Validation("bootstrap needs at least one unit".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0usize; n_units];
    let mut values = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        for s in sample.iter_mut() {
            *s = rng.random_range(0..n_units);
        }
        let v = metric(&sample);
        if v.is_finite() {
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(Error::UndefinedMetric(
            "metric undefined on every bootstrap resample".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&values, tail), quantile(&values, 1.0 - tail)))
}

// ---------------------------------------------------------------------------
// Prediction sets and the evaluation report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub report_id: String,
    pub dimension_id: String,
    pub predicted: u8,
    pub truth: u8,
    /// Verifier decision for the pair, when a verifier ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub rubric: Rubric,
    pub entries: Vec<PredictionEntry>,
}

/// Per-report vectors in rubric order.
struct ReportRows {
    preds: Vec<Vec<f64>>,
    truths: Vec<Vec<f64>>,
}

impl PredictionSet {
    pub fn new(rubric: Rubric, entries: Vec<PredictionEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            let dim = rubric
                .dimension(&e.dimension_id)
                .ok_or_else(|| Error::UnknownDimension(e.dimension_id.clone()))?;
            if e.predicted > dim.max_score || e.truth > dim.max_score {
                return Err(Error::Validation(format!(
                    "report `{}`, dimension `{}`: values {}/{} exceed {}",
                    e.report_id, e.dimension_id, e.predicted, e.truth, dim.max_score
                )));
            }
            if !seen.insert((e.report_id.as_str(), e.dimension_id.as_str())) {
                return Err(Error::Validation(format!(
                    "duplicate prediction for report `{}`, dimension `{}`",
                    e.report_id, e.dimension_id
                )));
            }
        }
        Ok(PredictionSet { rubric, entries })
    }

    fn rows(&self) -> Result<(Vec<String>, ReportRows)> {
        let mut order: Vec<String> = Vec::new();
        let mut map: BTreeMap<&str, BTreeMap<&str, (u8, u8)>> = BTreeMap::new();
        for e in &self.entries {
            let slot = map.entry(e.report_id.as_str()).or_insert_with(|| {
                order.push(e.report_id.clone());
                BTreeMap::new()
            });
            slot.insert(e.dimension_id.as_str(), (e.predicted, e.truth));
        }
        let mut rows = ReportRows {
            preds: Vec::new(),
            truths: Vec::new(),
        };
        for id in &order {
            let dims = &map[id.as_str()];
            let mut p = Vec::new();
            let mut t = Vec::new();
            for d in &self.rubric.dimensions {
                let &(pred, truth) = dims.get(d.id.as_str()).ok_or_else(|| Error::IncompleteReport {
                    report_id: id.clone(),
                    dimension_id: d.id.clone(),
                })?;
                p.push(pred as f64);
                t.push(truth as f64);
            }
            rows.preds.push(p);
            rows.truths.push(t);
        }
        Ok((order, rows))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionVerifierRow {
    pub dimension_id: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub majority_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_reports: usize,
    pub n_pairs: usize,
    pub total_mse: f64,
    pub total_alpha_interval: f64,
    pub total_weighted_acc: f64,
    pub dimension_mse: f64,
    pub dimension_weighted_acc: f64,
    pub per_dim_spearman_mean: f64,
    pub per_dim_spearman_sd: f64,
    pub per_dim_spearman_skipped: usize,
    pub per_dim_alpha_mean: f64,
    pub verifier_accuracy: Option<f64>,
    pub verifier_precision: Option<f64>,
    pub verifier_recall: Option<f64>,
    pub verifier_f1: Option<f64>,
    pub verifier_majority_baseline: Option<f64>,
    pub per_dimension_verifier: Vec<DimensionVerifierRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_intervals: Option<ConfidenceIntervals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceIntervals {
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub total_mse: (f64, f64),
    pub total_alpha_interval: (f64, f64),
    pub total_weighted_acc: (f64, f64),
    pub per_dim_spearman_mean: (f64, f64),
}

fn two_rater_alpha(preds: &[f64], truths: &[f64]) -> Result<f64> {
    krippendorff_alpha_interval(&[
        preds.iter().map(|&v| Some(v)).collect(),
        truths.iter().map(|&v| Some(v)).collect(),
    ])
}

fn totals(rows: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| rows[i].iter().sum()).collect()
}

/// Every metric for a prediction set. Verifier metrics appear when entries
/// carry decisions.
pub fn evaluate(set: &PredictionSet) -> Result<EvaluationReport> {
    let (order, rows) = set.rows()?;
    let all: Vec<usize> = (0..order.len()).collect();
    let pred_totals = totals(&rows.preds, &all);
    let true_totals = totals(&rows.truths, &all);
    let total_max = set.rubric.total_max as f64;
    let dim_max = set.rubric.dimensions.iter().map(|d| d.max_score).max().unwrap_or(5) as f64;

    let flat_p: Vec<f64> = rows.preds.concat();
    let flat_t: Vec<f64> = rows.truths.concat();
    let spearman = per_dimension_spearman(&rows.preds, &rows.truths)?;

    let n_dims = set.rubric.len();
    let mut dim_alphas = Vec::with_capacity(n_dims);
    for d in 0..n_dims {
        let p: Vec<f64> = rows.preds.iter().map(|r| r[d]).collect();
        let t: Vec<f64> = rows.truths.iter().map(|r| r[d]).collect();
        dim_alphas.push(two_rater_alpha(&p, &t)?);
    }

    let with_decisions: Vec<&PredictionEntry> = set.entries.iter().filter(|e| e.decision.is_some()).collect();
    let (overall, per_dimension_verifier) = if with_decisions.is_empty() {
        (None, Vec::new())
    } else {
        let decisions: Vec<bool> = with_decisions.iter().map(|e| e.decision.unwrap_or(false)).collect();
        let labels: Vec<bool> = with_decisions.iter().map(|e| e.truth > 0).collect();
        let overall = verifier_binary_metrics(&decisions, &labels)?;
        let majority = majority_baseline_accuracy(&labels)?;
        let mut table = Vec::new();
        for dim in &set.rubric.dimensions {
            let (d, l): (Vec<bool>, Vec<bool>) = with_decisions
                .iter()
                .filter(|e| e.dimension_id == dim.id)
                .map(|e| (e.decision.unwrap_or(false), e.truth > 0))
                .unzip();
            if d.is_empty() {
                continue;
            }
            let m = verifier_binary_metrics(&d, &l)?;
            table.push(DimensionVerifierRow {
                dimension_id: dim.id.clone(),
                accuracy: m.accuracy,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                majority_baseline: majority_baseline_accuracy(&l)?,
            });
        }
        (Some((overall, majority)), table)
    };

    Ok(EvaluationReport {
        n_reports: order.len(),
        n_pairs: set.entries.len(),
        total_mse: mse(&pred_totals, &true_totals)?,
        total_alpha_interval: two_rater_alpha(&pred_totals, &true_totals)?,
        total_weighted_acc: weighted_accuracy(
            &pred_totals,
            &true_totals,
            total_max,
            WeightedAccuracyReading::Normalized,
        )?,
        dimension_mse: mse(&flat_p, &flat_t)?,
        dimension_weighted_acc: weighted_accuracy(&flat_p, &flat_t, dim_max, WeightedAccuracyReading::Normalized)?,
        per_dim_spearman_mean: spearman.mean,
        per_dim_spearman_sd: spearman.sd,
        per_dim_spearman_skipped: spearman.reports_skipped,
        per_dim_alpha_mean: dim_alphas.iter().sum::<f64>() / n_dims as f64,
        verifier_accuracy: overall.map(|(m, _)| m.accuracy),
        verifier_precision: overall.map(|(m, _)| m.precision),
        verifier_recall: overall.map(|(m, _)| m.recall),
        verifier_f1: overall.map(|(m, _)| m.f1),
        verifier_majority_baseline: overall.map(|(_, b)| b),
        per_dimension_verifier,
        confidence_intervals: None,
    })
}

/// Adds report-level percentile bootstrap intervals to `report`.
pub fn add_bootstrap(
    set: &PredictionSet,
    report: &mut EvaluationReport,
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<()> {
    let (order, rows) = set.rows()?;
    let n = order.len();
    let total_max = set.rubric.total_max as f64;
    let ci = |f: &dyn Fn(&[usize]) -> f64| bootstrap_ci(n, f, n_resamples, seed, level);
    let mse_ci = ci(&|idx| mse(&totals(&rows.preds, idx), &totals(&rows.truths, idx)).unwrap_or(f64::NAN))?;
    let alpha_ci =
        ci(&|idx| two_rater_alpha(&totals(&rows.preds, idx), &totals(&rows.truths, idx)).unwrap_or(f64::NAN))?;
    let acc_ci = ci(&|idx| {
        weighted_accuracy(
            &totals(&rows.preds, idx),
            &totals(&rows.truths, idx),
            total_max,
            WeightedAccuracyReading::Normalized,
        )
        .unwrap_or(f64::NAN)
    })?;
    let rho_ci = ci(&|idx| {
        let p: Vec<Vec<f64>> = idx.iter().map(|&i| rows.preds[i].clone()).collect();
        let t: Vec<Vec<f64>> = idx.iter().map(|&i| rows.truths[i].clone()).collect();
        per_dimension_spearman(&p, &t).map(|s| s.mean).unwrap_or(f64::NAN)
    })?;
    report.confidence_intervals = Some(ConfidenceIntervals {
        level,
        n_resamples,
        seed,
        total_mse: mse_ci,
        total_alpha_interval: alpha_ci,
        total_weighted_acc: acc_ci,
        per_dim_spearman_mean: rho_ci,
    });
    Ok(())
}

/// One CSV row per (report, dimension): predicted vs truth.
pub fn write_predictions_csv(path: &Path, set: &PredictionSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["report_id", "dimension_id", "predicted", "truth", "decision"])?;
    for e in &set.entries {
        let decision = e.decision.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            e.report_id.as_str(),
            e.dimension_id.as_str(),
            &e.predicted.to_string(),
            &e.truth.to_string(),
            decision.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::corpus::{DimensionMode, RubricDimension};

    fn rubric(n: usize) -> Rubric {
        let dims = (1..=n)
            .map(|i| RubricDimension::new(format!("d{i}"), i, "q", DimensionMode::Scored))
            .collect();
        Rubric::new("r", dims).unwrap()
    }

    fn scores(vals: &[u8]) -> Vec<(String, u8)> {
        vals.iter()
            .enumerate()
            .map(|(i, &s)| (format!("d{}", i + 1), s))
            .collect()
    }

    #[test]
    fn total_score_cases() {
        let r = rubric(7);
        assert_eq!(total_score(&r, "x", &scores(&[0; 7])).unwrap(), 0);
        assert_eq!(total_score(&r, "x", &scores(&[5; 7])).unwrap(), 35);
        assert_eq!(total_score(&r, "x", &scores(&[1, 2, 3, 4, 5, 0, 1])).unwrap(), 16);
        assert!(matches!(
            total_score(&r, "x", &scores(&[1; 6])),
            Err(Error::IncompleteReport { .. })
        ));
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 2.5);
        assert_eq!(mse(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn weighted_accuracy_cases() {
        let n = WeightedAccuracyReading::Normalized;
        assert_eq!(weighted_accuracy(&[3.0, 4.0], &[3.0, 4.0], 5.0, n).unwrap(), 1.0);
        assert_eq!(weighted_accuracy(&[5.0], &[0.0], 5.0, n).unwrap(), 0.0);
        assert!((weighted_accuracy(&[30.0], &[35.0], 35.0, n).unwrap() - 0.85714).abs() < 1e-5);
        assert!(weighted_accuracy(&[6.0], &[0.0], 5.0, n).is_err());
        let lit = weighted_accuracy(&[35.0], &[35.0], 35.0, WeightedAccuracyReading::Literal).unwrap();
        assert!((lit - 1.0 / 35.0).abs() < 1e-12);
    }

    #[test]
    fn masi_cases() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        assert!((masi_distance(&s(&[1, 2]), &s(&[1])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(masi_distance(&s(&[1]), &s(&[2])), 1.0);
        assert_eq!(masi_distance(&s(&[]), &s(&[])), 0.0);
        assert_eq!(masi_distance(&s(&[3, 4]), &s(&[3, 4])), 0.0);
        // overlap without containment: J = 1/3, M = 1/3
        assert!((masi_distance(&s(&[1, 2]), &s(&[2, 3])) - (1.0 - 1.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn alpha_perfect_and_degenerate() {
        let same = vec![vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)]; 2];
        assert_eq!(krippendorff_alpha_interval(&same).unwrap(), 1.0);
        let constant = vec![vec![Some(3.0); 4]; 3];
        assert_eq!(krippendorff_alpha_interval(&constant).unwrap(), 1.0);
        assert!(krippendorff_alpha_interval(&[vec![Some(1.0)]]).is_err());
    }

    #[test]
    fn masi_alpha_identical_raters() {
        let sel = |rater: &str, report: &str, pos: &[usize]| SentenceSelection {
            report_id: report.into(),
            dimension_id: "d1".into(),
            rater_id: rater.into(),
            positions: pos.iter().copied().collect(),
        };
        let selections = vec![
            sel("a", "r1", &[1, 2]),
            sel("b", "r1", &[1, 2]),
            sel("a", "r2", &[4]),
            sel("b", "r2", &[4]),
        ];
        assert_eq!(masi_alpha(&selections).unwrap(), 1.0);
        assert!(masi_alpha(&selections[..1]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let p = vec![vec![1.0, 2.0, 3.0, 0.0], vec![5.0, 4.0, 0.0, 1.0]];
        let s = per_dimension_spearman(&p, &p).unwrap();
        assert_eq!((s.mean, s.sd), (1.0, 0.0));
        let rev: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
        assert_eq!(per_dimension_spearman(&p, &rev).unwrap().mean, -1.0);
        let constant = vec![vec![2.0; 4]];
        assert!(matches!(
            per_dimension_spearman(&constant, &constant),
            Err(Error::UndefinedMetric(_))
        ));
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn binary_metrics_hand_confusion() {
        // TP=2, FP=1, FN=1, TN=6
        let mut decisions = vec![true, true, true, false];
        let mut labels = vec![true, true, false, true];
        decisions.extend([false; 6]);
        labels.extend([false; 6]);
        let m = verifier_binary_metrics(&decisions, &labels).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert_eq!(majority_baseline_accuracy(&labels).unwrap(), 0.7);
        let perfect = verifier_binary_metrics(&labels, &labels).unwrap();
        assert_eq!(
            (perfect.accuracy, perfect.precision, perfect.recall, perfect.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn bootstrap_constant_and_seeded() {
        assert_eq!(bootstrap_ci(10, |_| 4.2, 200, 1, 0.95).unwrap(), (4.2, 4.2));
        let data: Vec<f64> = (0..30).map(|i| (i * 7 % 11) as f64).collect();
        let mean = |idx: &[usize]| idx.iter().map(|&i| data[i]).sum::<f64>() / idx.len() as f64;
        let a = bootstrap_ci(data.len(), mean, 500, 9, 0.95).unwrap();
        let b = bootstrap_ci(data.len(), mean, 500, 9, 0.95).unwrap();
        assert_eq!(a, b);
        assert!(bootstrap_ci(10, |_| 1.0, 99, 1, 0.95).is_err());
    }

    #[test]
    fn evaluate_perfect_predictions() {
        let r = rubric(3);
        let mut entries = Vec::new();
        for (i, truths) in [[0u8, 3, 5], [2, 2, 4], [1, 0, 0]].iter().enumerate() {
            for (d, &t) in truths.iter().enumerate() {
                entries.push(PredictionEntry {
                    report_id: format!("r{i}"),
                    dimension_id: format!("d{}", d + 1),
                    predicted: t,
                    truth: t,
                    decision: Some(t > 0),
                });
            }
        }
        let set = PredictionSet::new(r, entries).unwrap();
        let mut report = evaluate(&set).unwrap();
        assert_eq!(report.total_weighted_acc, 1.0);
        assert_eq!(report.total_mse, 0.0);
        assert_eq!(report.total_alpha_interval, 1.0);
        assert_eq!(report.per_dim_spearman_mean, 1.0);
        assert_eq!(report.verifier_accuracy, Some(1.0));
        assert_eq!(report.per_dimension_verifier.len(), 3);
        add_bootstrap(&set, &mut report, 200, 5, 0.95).unwrap();
        assert_eq!(report.confidence_intervals.unwrap().total_mse, (0.0, 0.0));
    }

    #[test]
    fn prediction_set_rejects_duplicates_and_bounds() {
        let e = |p: u8| PredictionEntry {
            report_id: "r".into(),
            dimension_id: "d1".into(),
            predicted: p,
            truth: 0,
            decision: None,
        };
        assert!(PredictionSet::new(rubric(1), vec![e(1), e(2)]).is_err());
        assert!(PredictionSet::new(rubric(1), vec![e(6)]).is_err());
    }
}

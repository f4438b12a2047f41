//! Brute-force reference implementations shared by the integration and
//! acceptance tests. Kept deliberately naive.

#![allow(dead_code)]

use rand::Rng;

/// Pairwise Krippendorff alpha: every ordered pair of values inside a unit,
/// and every ordered pair of pairable values overall.
pub fn alpha_pairwise<T, D>(ratings: &[Vec<Option<T>>], delta: D) -> Option<f64>
where
    T: Clone,
    D: Fn(&T, &T) -> f64,
{
    let items = ratings.first().map_or(0, |r| r.len());
    let units: Vec<Vec<T>> = (0..items)
        .map(|i| ratings.iter().filter_map(|r| r[i].clone()).collect::<Vec<T>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.is_empty() {
        return None;
    }
    let n: f64 = units.iter().map(|u| u.len() as f64).sum();
    let mut d_o = 0.0;
    for u in &units {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta(&u[i], &u[j]);
                }
            }
        }
        d_o += s / (u.len() as f64 - 1.0);
    }
    d_o /= n;
    let all: Vec<&T> = units.iter().flatten().collect();
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += delta(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - d_o / d_e)
}

pub fn interval_delta(a: &f64, b: &f64) -> f64 {
    (a - b) * (a - b)
}

/// MASI distance on plain vectors.
pub fn masi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    a.dedup();
    b.sort_unstable();
    b.dedup();
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.iter().filter(|x| b.contains(x)).count();
    let mut union = a.clone();
    union.extend(b.iter().filter(|x| !a.contains(x)));
    let jaccard = inter as f64 / union.len() as f64;
    let a_in_b = a.iter().all(|x| b.contains(x));
    let b_in_a = b.iter().all(|x| a.contains(x));
    let m = if a_in_b && b_in_a {
        1.0
    } else if a_in_b || b_in_a {
        2.0 / 3.0
    } else if inter > 0 {
        1.0 / 3.0
    } else {
        0.0
    };
    1.0 - jaccard * m
}

/// Average ranks by counting.
pub fn ranks_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let rx = ranks_oracle(x);
    let ry = ranks_oracle(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// (precision, recall, f1, accuracy) with non-zero as the positive class.
pub fn prf_oracle(decisions: &[bool], labels: &[bool]) -> (f64, f64, f64, f64) {
    let pairs: Vec<(bool, bool)> = decisions.iter().copied().zip(labels.iter().copied()).collect();
    let tp = pairs.iter().filter(|p| **p == (true, true)).count() as f64;
    let predicted = pairs.iter().filter(|p| p.0).count() as f64;
    let actual = pairs.iter().filter(|p| p.1).count() as f64;
    let correct = pairs.iter().filter(|p| p.0 == p.1).count() as f64;
    let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
    let recall = if actual > 0.0 { tp / actual } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1, correct / pairs.len() as f64)
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-8)
}

pub fn logistic_oracle(d: f64) -> f64 {
    1.0 / (1.0 + (-10.0 * (d - 0.5)).exp())
}

pub fn oll_oracle(p: &[f64; 6], y: usize, alpha: f64) -> f64 {
    let mut s = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        let d = (y as f64 - i as f64).abs().powf(alpha);
        s -= (1.0 - pi.min(1.0 - 1e-7)).ln() * d;
    }
    s
}

pub fn random_distribution(rng: &mut impl Rng) -> [f64; 6] {
    let mut p = [0.0; 6];
    for v in p.iter_mut() {
        *v = rng.random_range(0.01..1.0);
    }
    let s: f64 = p.iter().sum();
    p.map(|v| v / s)
}

/// Random rater x item matrix of small integer ratings with gaps.
pub fn random_ratings(rng: &mut impl Rng) -> Vec<Vec<Option<f64>>> {
    let raters = rng.random_range(2..5);
    let items = rng.random_range(2..12);
    (0..raters)
        .map(|_| {
            (0..items)
                .map(|_| rng.random_bool(0.85).then(|| rng.random_range(0..6) as f64))
                .collect()
        })
        .collect()
}

pub fn random_set(rng: &mut impl Rng) -> std::collections::BTreeSet<usize> {
    let n = rng.random_range(0..5);
    (0..n).map(|_| rng.random_range(0..8)).collect()
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

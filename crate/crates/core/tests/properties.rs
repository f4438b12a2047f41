mod common;

use proptest::prelude::*;
use rubricscore::encoder::Embedding;
use rubricscore::grader::{ce_loss, grade, oll_loss, LinearHead, ScoreDistribution};
use rubricscore::linalg::Matrix;
use rubricscore::metrics::{krippendorff_alpha_interval, mse, weighted_accuracy, WeightedAccuracyReading};
use rubricscore::verifier::{cosine_similarity, logistic, rank_top_k, weighted_bce_loss};

fn distribution() -> impl Strategy<Value = ScoreDistribution> {
    prop::array::uniform6(0.001f64..1.0).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        ScoreDistribution::new(raw.map(|v| v / s)).unwrap()
    })
}

proptest! {
    #[test]
    fn oll_is_nonnegative_and_monotone_in_alpha(p in distribution(), y in 0u8..6, a1 in 0.5f64..3.0, da in 0.0f64..2.0) {
        let l1 = oll_loss(&p, y, a1).unwrap();
        let l2 = oll_loss(&p, y, a1 + da).unwrap();
        prop_assert!(l1 >= 0.0);
        prop_assert!(l2 >= l1 - 1e-12);
    }

    #[test]
    fn oll_prefers_mass_near_the_label(y in 0usize..6, i in 0usize..6, j in 0usize..6, a in 0.01f64..0.3, b in 0.31f64..0.6, alpha in 0.5f64..3.0) {
        let (di, dj) = ((y as i64 - i as i64).abs(), (y as i64 - j as i64).abs());
        prop_assume!(i != y && j != y && di < dj);
        let rest = (1.0 - a - b) / 4.0;
        let build = |pi: f64, pj: f64| {
            let mut probs = [rest; 6];
            probs[i] = pi;
            probs[j] = pj;
            ScoreDistribution::new(probs).unwrap()
        };
        let far_heavy = oll_loss(&build(a, b), y as u8, alpha).unwrap();
        let near_heavy = oll_loss(&build(b, a), y as u8, alpha).unwrap();
        prop_assert!(far_heavy > near_heavy);
    }

    #[test]
    fn ce_and_bce_are_nonnegative(p in distribution(), y in 0u8..6, q in 0.0f64..=1.0, label in any::<bool>(), w in 0.001f64..1000.0) {
        prop_assert!(ce_loss(&p, y).unwrap() >= 0.0);
        prop_assert!(weighted_bce_loss(q, label, w) >= 0.0);
    }

    #[test]
    fn grade_output_is_a_distribution(seed in any::<u64>(), dim in 1usize..12, scale in 0.1f64..50.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = || Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (q, r, s) = (v(), v(), v());
        let mut head = LinearHead::zeros(3 * dim);
        head.weights = Matrix { rows: 6, cols: 3 * dim, data: (0..18 * dim).map(|_| rng.random_range(-scale..scale)).collect() };
        head.bias = (0..6).map(|_| rng.random_range(-scale..scale)).collect();
        let d = grade(&q, Some(&r), Some(&s), &head).unwrap();
        prop_assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(d.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(d.argmax() <= 5);
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in prop::collection::vec(-10.0f64..10.0, 1..16), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        let c = cosine_similarity(&a, &b, 1e-8).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine_similarity(&b, &a, 1e-8).unwrap()).abs() < 1e-12);
        prop_assert!((c - common::cosine_oracle(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn top_k_has_min_k_n_entries_in_descending_order(sims in prop::collection::vec(-1.0f64..1.0, 1..30), k in 1usize..30) {
        let top = rank_top_k(&sims, k);
        prop_assert_eq!(top.len(), k.min(sims.len()));
        for w in top.windows(2) {
            prop_assert!(w[0].value > w[1].value || (w[0].value == w[1].value && w[0].sentence_position < w[1].sentence_position));
        }
        let kth = top.last().unwrap().value;
        let above = sims.iter().filter(|&&v| v > kth).count();
        prop_assert!(above < top.len());
    }

    #[test]
    fn logistic_is_monotone(a in -2.0f64..2.0, d in 0.0f64..1.0) {
        prop_assert!(logistic(a + d) >= logistic(a));
        prop_assert!((logistic(a) - common::logistic_oracle(a)).abs() < 1e-15);
    }

    #[test]
    fn weighted_accuracy_is_bounded_and_order_free(pairs in prop::collection::vec((0u8..36, 0u8..36), 1..40), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let p: Vec<f64> = pairs.iter().map(|x| x.0 as f64).collect();
        let t: Vec<f64> = pairs.iter().map(|x| x.1 as f64).collect();
        let acc = weighted_accuracy(&p, &t, 35.0, WeightedAccuracyReading::Normalized).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let t2: Vec<f64> = idx.iter().map(|&i| t[i]).collect();
        let acc2 = weighted_accuracy(&p2, &t2, 35.0, WeightedAccuracyReading::Normalized).unwrap();
        prop_assert!((acc - acc2).abs() < 1e-12);
        prop_assert!(mse(&p, &t).unwrap() >= 0.0);
    }

    #[test]
    fn interval_alpha_is_affine_invariant(vals in prop::collection::vec((0u8..6, 0u8..6), 2..20), a in 0.1f64..10.0, b in -20.0f64..20.0) {
        let rows = |f: &dyn Fn(f64) -> f64| -> Vec<Vec<Option<f64>>> {
            vec![
                vals.iter().map(|v| Some(f(v.0 as f64))).collect(),
                vals.iter().map(|v| Some(f(v.1 as f64))).collect(),
            ]
        };
        let base = krippendorff_alpha_interval(&rows(&|x| x)).unwrap();
        let moved = krippendorff_alpha_interval(&rows(&|x| a * x + b)).unwrap();
        prop_assert!((base - moved).abs() < 1e-9);
        prop_assert!(base <= 1.0 + 1e-12);
    }
}

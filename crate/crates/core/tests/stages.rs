use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rubricscore::corpus::{DimensionMode, Report, RubricDimension, Split};
use rubricscore::encoder::{BaseEncoder, Encoder, ProviderSettings, ReportStrategy, Side};
use rubricscore::metrics::{bootstrap_ci, mse};
use rubricscore::verifier::{Verifier, VerifierConfig};

fn dimension() -> RubricDimension {
    RubricDimension::new(
        "research_question",
        1,
        "States the research question and the aim or purpose the experiment will investigate.",
        DimensionMode::Scored,
    )
}

#[test]
fn batch_and_singleton_encoding_agree() {
    let enc = Encoder::new(ProviderSettings::default(), Side::Passage).unwrap();
    let texts = [
        "The cart rolled down.",
        "Our aim is clear.",
        "Data were recorded in a table.",
    ];
    let batch = enc.encode(&texts).unwrap();
    for (t, b) in texts.iter().zip(&batch) {
        let single = &enc.encode(&[*t]).unwrap()[0];
        for (x, y) in single.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn moving_average_of_two_disjoint_windows_is_their_mean() {
    let settings = ProviderSettings {
        max_tokens: 4,
        window_tokens: Some(4),
        window_stride: Some(4),
        ..ProviderSettings::default()
    };
    let base = BaseEncoder::new(settings).unwrap();
    let report = Report::new("r", "Alpha beta gamma delta. Epsilon zeta eta theta.", Split::Test).unwrap();
    let (avg, truncated) = base.embed_report(&report, ReportStrategy::MovingAverage);
    assert!(!truncated);
    let first = base.embed_tokens(&["alpha", "beta", "gamma", "delta"]);
    let second = base.embed_tokens(&["epsilon", "zeta", "eta", "theta"]);
    for i in 0..avg.len() {
        assert!((avg[i] - (first[i] + second[i]) / 2.0).abs() < 1e-12);
    }
    let (trunc, was_truncated) = base.embed_report(&report, ReportStrategy::Truncate);
    assert!(was_truncated);
    assert_eq!(trunc, first);
}

#[test]
fn untrained_verifier_separates_distractors_from_keyword_rich_reports() {
    let verifier = Verifier::new(&ProviderSettings::default(), VerifierConfig::default()).unwrap();
    let dim = dimension();
    let distractors = Report::new(
        "d",
        "The red cart slid down the old ramp. We timed the bob near the wooden bench. \
         The spring bounced 12 times in 3.4 seconds. Then the heavy ball was dropped beside the wall.",
        Split::Test,
    )
    .unwrap();
    let out = verifier.verify(&distractors, &dim).unwrap();
    assert!(out.probability < 0.5, "{}", out.probability);
    assert!(!out.decision);

    let rich = Report::new(
        "k",
        "The research question states the aim of the experiment. \
         Our purpose is to investigate the question and the aim. \
         The experiment will investigate the research question with a clear purpose. \
         The red cart slid down the old ramp.",
        Split::Test,
    )
    .unwrap();
    let out = verifier.verify(&rich, &dim).unwrap();
    assert!(out.decision, "{}", out.probability);
    assert!(out.positions().iter().all(|&p| p < 3));
}

#[test]
fn bootstrap_interval_contains_point_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for fixture in 0..50 {
        let n = rng.random_range(8..40);
        let preds: Vec<f64> = (0..n).map(|_| rng.random_range(0..36) as f64).collect();
        let truths: Vec<f64> = (0..n).map(|_| rng.random_range(0..36) as f64).collect();
        let point = mse(&preds, &truths).unwrap();
        let metric = |idx: &[usize]| {
            let p: Vec<f64> = idx.iter().map(|&i| preds[i]).collect();
            let t: Vec<f64> = idx.iter().map(|&i| truths[i]).collect();
            mse(&p, &t).unwrap()
        };
        let (lo, hi) = bootstrap_ci(n, metric, 500, fixture, 0.95).unwrap();
        assert!(
            lo <= point && point <= hi,
            "fixture {fixture}: {point} outside [{lo}, {hi}]"
        );
    }
}

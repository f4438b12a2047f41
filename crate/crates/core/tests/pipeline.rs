use std::sync::OnceLock;

use rubricscore::corpus::{generate_synthetic_corpus, Corpus, DimensionMode, Report, Split, SyntheticConfig};
use rubricscore::pipeline::*;
use rubricscore::Error;

struct Fixture {
    corpus: Corpus,
    trained: TrainedPipeline,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = generate_synthetic_corpus(&SyntheticConfig::new(7, 250, 7)).unwrap();
        let config = RunConfig {
            seed: 7,
            ..RunConfig::default()
        };
        let trained = train_pipeline(&corpus, &config).unwrap();
        Fixture { corpus, trained }
    })
}

fn small_presence() -> (Corpus, TrainedPipeline) {
    let mut synth = SyntheticConfig::new(3, 40, 3);
    synth.mode = DimensionMode::Presence;
    let corpus = generate_synthetic_corpus(&synth).unwrap();
    let config = RunConfig {
        epochs: 3,
        mode: DimensionMode::Presence,
        ..RunConfig::default()
    };
    let trained = train_pipeline(&corpus, &config).unwrap();
    (corpus, trained)
}

#[test]
fn checkpoint_round_trip_reproduces_assessments() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    f.trained.save(&dir).unwrap();
    let loaded = AssessmentModel::load(&dir).unwrap();
    for report in f.corpus.reports_in(Split::Test) {
        assert_eq!(loaded.assess(report).unwrap(), f.trained.model.assess(report).unwrap());
    }
}

#[test]
fn total_is_sum_of_dimension_scores() {
    let f = fixture();
    for report in f.corpus.reports.iter().take(40) {
        let out = f.trained.model.assess(report).unwrap();
        assert_eq!(out.per_dimension.len(), 7);
        assert_eq!(out.total, out.per_dimension.iter().map(|d| d.score as u32).sum::<u32>());
        for d in &out.per_dimension {
            assert!(d.score <= 5);
            if d.decision == Some(false) {
                assert_eq!(d.score, 0);
            }
        }
    }
}

#[test]
fn distractor_only_report_scores_zero() {
    let text = "The red cart slid down the old ramp. We timed the bob near the wooden bench. \
                The spring bounced 12 times in 3.4 seconds. Then the heavy ball was dropped beside the wall. \
                The quiet partner held the stopwatch.";
    let report = Report::new("blank", text, Split::Test).unwrap();
    let out = fixture().trained.model.assess(&report).unwrap();
    assert_eq!(out.total, 0, "{out:?}");
    assert!(out.per_dimension.iter().all(|d| d.decision == Some(false)));
}

#[test]
fn five_research_question_sentences_score_at_least_three() {
    let text = "Our aim concerned the cart and its purpose. The question of the ramp moved with a clear objective. \
                In this lab the inquiry and aim timed the spring. The purpose held the ball as part of the question. \
                Our objective concerned the track and its inquiry. The stopwatch rested on the bench. \
                The old ball moved the ramp.";
    let report = Report::new("rq", text, Split::Test).unwrap();
    let out = fixture().trained.model.assess(&report).unwrap();
    let rq = &out.per_dimension[0];
    assert_eq!(rq.dimension_id, "research_question");
    assert!(rq.score >= 3, "{rq:?}");
}

#[test]
fn validation_loss_falls_over_first_epochs() {
    let f = fixture();
    for log in [
        f.trained.verifier_log.as_ref().unwrap(),
        f.trained.grader_log.as_ref().unwrap(),
    ] {
        let val: Vec<f64> = log.epochs.iter().map(|e| e.val_loss).collect();
        assert_eq!(log.epochs[0].epoch, 1);
        assert!(val[1] < val[0] && val[2] < val[1], "{val:?}");
        assert!(log.best_val_loss <= val[2]);
    }
}

#[test]
fn training_is_deterministic() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(1, 40, 3)).unwrap();
    let config = RunConfig {
        epochs: 2,
        ..RunConfig::default()
    };
    let a = train_pipeline(&corpus, &config).unwrap();
    let b = train_pipeline(&corpus, &config).unwrap();
    assert_eq!(a.verifier_log, b.verifier_log);
    assert_eq!(a.grader_log, b.grader_log);
    let (_, ea) = a.model.evaluate_split(&corpus, Split::Test).unwrap();
    let (_, eb) = b.model.evaluate_split(&corpus, Split::Test).unwrap();
    assert_eq!(serde_json::to_string(&ea).unwrap(), serde_json::to_string(&eb).unwrap());
}

#[test]
fn mode_mismatches_are_rejected() {
    let f = fixture();
    let report = &f.corpus.reports[0];
    assert!(matches!(
        f.trained.model.assess_presence(report),
        Err(Error::ModeMismatch { .. })
    ));

    let (corpus, presence) = small_presence();
    assert!(presence.model.grader.is_none());
    assert!(matches!(
        presence.model.assess(&corpus.reports[0]),
        Err(Error::ModeMismatch { .. })
    ));
    let out = presence.model.assess_presence(&corpus.reports[0]).unwrap();
    assert_eq!(out.present.len(), 3);

    let scored_config = RunConfig {
        epochs: 1,
        ..RunConfig::default()
    };
    assert!(matches!(
        train_pipeline(&corpus, &scored_config),
        Err(Error::ModeMismatch { .. })
    ));
}

#[test]
fn save_replaces_existing_checkpoint_without_leftovers() {
    let (_, presence) = small_presence();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("stale.txt"), "old").unwrap();
    presence.save(&dir).unwrap();
    assert!(!dir.join("stale.txt").exists());
    assert!(dir.join("manifest.json").exists());
    let names: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["ck".to_string()]);
    AssessmentModel::load(&dir).unwrap();
}

#[test]
fn tampered_and_missing_files_fail_to_load() {
    let (_, presence) = small_presence();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    presence.save(&dir).unwrap();
    std::fs::write(dir.join("config.json"), "{}").unwrap();
    assert!(matches!(AssessmentModel::load(&dir), Err(Error::CheckpointMismatch(_))));
    presence.save(&dir).unwrap();
    std::fs::remove_file(dir.join("rubric.json")).unwrap();
    assert!(matches!(AssessmentModel::load(&dir), Err(Error::CheckpointMismatch(_))));
}

#[test]
fn random_positions_are_seeded_and_sorted() {
    let report = &fixture().corpus.reports[3];
    let a = random_positions(7, report, "hypothesis");
    assert_eq!(a, random_positions(7, report, "hypothesis"));
    assert_eq!(a.len(), RANDOM_SELECTION_SIZE.min(report.sentences.len()));
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert!(a.iter().all(|&p| p < report.sentences.len()));
}

#[test]
fn random_variant_skips_gate() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(2, 40, 3)).unwrap();
    let config = Ablation::RandomVerifier.apply(&RunConfig {
        epochs: 2,
        ..RunConfig::default()
    });
    let trained = train_pipeline(&corpus, &config).unwrap();
    assert!(trained.verifier_log.is_none());
    let out = trained.model.assess(&corpus.reports[0]).unwrap();
    for d in &out.per_dimension {
        assert_eq!(d.decision, None);
        assert_eq!(d.selected_positions.len(), 3);
    }
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let corpus = generate_synthetic_corpus(&SyntheticConfig::new(2, 20, 2)).unwrap();
    for bad in [
        RunConfig {
            learning_rate: 0.0,
            ..RunConfig::default()
        },
        RunConfig {
            batch_size: 0,
            ..RunConfig::default()
        },
        RunConfig {
            k: 0,
            ..RunConfig::default()
        },
        RunConfig {
            alpha: f64::NAN,
            ..RunConfig::default()
        },
    ] {
        assert!(matches!(
            train_pipeline(&corpus, &bad),
            Err(Error::Config(_) | Error::Validation(_))
        ));
    }
}

#[test]
fn grid_picks_lowest_loss_and_flags_divergence() {
    let grid = GridSpec {
        learning_rates: vec![1e-3, 5e-3],
        batch_sizes: vec![4],
        alphas: vec![1.0, 2.0],
        ks: vec![1, 3],
    };
    assert_eq!(grid.len(), 8);
    let result = grid_search_with(&grid, &RunConfig::default(), |cfg| {
        if cfg.k == 1 && cfg.alpha == 2.0 {
            return Ok((f64::NAN, None));
        }
        Ok((cfg.learning_rate * 100.0 + cfg.alpha + cfg.k as f64, None))
    })
    .unwrap();
    assert_eq!(result.leaderboard.len(), 8);
    assert_eq!(result.leaderboard.iter().filter(|r| r.diverged).count(), 2);
    assert_eq!(
        (result.best.learning_rate, result.best.alpha, result.best.k),
        (1e-3, 1.0, 1)
    );
    let empty = GridSpec { ks: vec![], ..grid };
    assert!(matches!(
        grid_search_with(&empty, &RunConfig::default(), |_| Ok((0.0, None))),
        Err(Error::Config(_))
    ));
}

#[test]
fn presence_flags_only_the_dimension_present() {
    let mut synth = SyntheticConfig::new(7, 250, 7);
    synth.mode = DimensionMode::Presence;
    let corpus = generate_synthetic_corpus(&synth).unwrap();
    let config = RunConfig {
        seed: 7,
        mode: DimensionMode::Presence,
        ..RunConfig::default()
    };
    let trained = train_pipeline(&corpus, &config).unwrap();
    let essay = Report::new(
        "essay",
        "Then the small floor was held beside the stopwatch. The equation of the pendulum held with a clear formula. \
         The narrow ramp swung the string. The red cart watched the room. The room bounced 10 times in 2.9 seconds. \
         In this lab the law and model timed the cart. The steady group moved the ruler. \
         Then the bright ball was bounced beside the room. We rested the wall near the quiet floor.",
        Split::Test,
    )
    .unwrap();
    let out = trained.model.assess_presence(&essay).unwrap();
    assert_eq!(out.dimension_ids[3], "theory");
    let expected: Vec<bool> = (0..7).map(|i| i == 3).collect();
    assert_eq!(out.present, expected, "{:?}", out.probabilities);
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Curves {
    verifier_val_loss: Vec<f64>,
    grader_val_loss: Vec<f64>,
}

/// Compares the seed-7 validation curves with the stored fixture. Set
/// `RUBRICSCORE_RECORD_FIXTURES=1` to rewrite it.
#[test]
fn validation_curves_match_recorded_fixture() {
    let f = fixture();
    let curve = |log: &Option<rubricscore::optim::TrainingLog>| -> Vec<f64> {
        log.as_ref().unwrap().epochs.iter().map(|e| e.val_loss).collect()
    };
    let now = Curves {
        verifier_val_loss: curve(&f.trained.verifier_log),
        grader_val_loss: curve(&f.trained.grader_log),
    };
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/seed7_curves.json");
    if std::env::var_os("RUBRICSCORE_RECORD_FIXTURES").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&now).unwrap()).unwrap();
    }
    let stored: Curves = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for (a, b) in [
        (&now.verifier_val_loss, &stored.verifier_val_loss),
        (&now.grader_val_loss, &stored.grader_val_loss),
    ] {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0), "{x} vs stored {y}");
        }
        assert!(b[1] < b[0] && b[2] < b[1], "stored curve {b:?}");
    }
}

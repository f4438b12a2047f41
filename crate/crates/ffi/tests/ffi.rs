use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rubricscore::corpus::{generate_synthetic_corpus, DimensionMode, SyntheticConfig};
use rubricscore::pipeline::{train_pipeline, RunConfig};
use rubricscore_ffi::*;

fn small_config(mode: DimensionMode) -> RunConfig {
    let mut cfg = RunConfig {
        epochs: 2,
        mode,
        ..RunConfig::default()
    };
    cfg.encoder.embedding_dim = 32;
    cfg
}

fn checkpoint(dir: &Path, mode: DimensionMode) {
    let mut synth = SyntheticConfig::new(3, 30, 3);
    synth.mode = mode;
    let corpus = generate_synthetic_corpus(&synth).unwrap();
    train_pipeline(&corpus, &small_config(mode)).unwrap().save(dir).unwrap();
}

fn last_error() -> String {
    let p = rs_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { rs_string_free(p) };
    s
}

fn load(dir: &Path) -> *mut RsModel {
    let path = CString::new(dir.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { rs_model_load(path.as_ptr(), &mut model) }, RsStatus::Ok);
    assert!(!model.is_null());
    model
}

#[test]
fn scored_model_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    checkpoint(&dir, DimensionMode::Scored);
    let model = load(&dir);
    unsafe {
        assert_eq!(rs_model_num_dimensions(model), 3);
        assert_eq!(rs_model_is_presence(model), 0);
        let mut id = ptr::null_mut();
        assert_eq!(rs_model_dimension_id(model, 0, &mut id), RsStatus::Ok);
        assert_eq!(CStr::from_ptr(id).to_str().unwrap(), "research_question");
        rs_string_free(id);
        assert_eq!(rs_model_dimension_id(model, 9, &mut id), RsStatus::Validation);

        let text = CString::new("Our aim concerned the cart and its question. The old ball moved the ramp.").unwrap();
        let mut scores = [9u8; 3];
        let mut total = 0u32;
        assert_eq!(
            rs_model_assess_text(model, text.as_ptr(), scores.as_mut_ptr(), scores.len(), &mut total),
            RsStatus::Ok
        );
        assert!(scores.iter().all(|&s| s <= 5));
        assert_eq!(total, scores.iter().map(|&s| s as u32).sum::<u32>());

        let mut short = [0u8; 2];
        assert_eq!(
            rs_model_assess_text(model, text.as_ptr(), short.as_mut_ptr(), short.len(), &mut total),
            RsStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 3"));

        let empty = CString::new("   ").unwrap();
        assert_eq!(
            rs_model_assess_text(model, empty.as_ptr(), scores.as_mut_ptr(), 3, &mut total),
            RsStatus::Validation
        );

        let rid = CString::new("r1").unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(
            rs_model_assess_json(model, rid.as_ptr(), text.as_ptr(), &mut json),
            RsStatus::Ok
        );
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        rs_string_free(json);
        assert_eq!(v["report_id"], "r1");
        assert_eq!(v["per_dimension"].as_array().unwrap().len(), 3);
        assert_eq!(v["total"].as_u64().unwrap(), total as u64);
        rs_model_free(model);
    }
}

#[test]
fn presence_model_writes_booleans() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    checkpoint(&dir, DimensionMode::Presence);
    let model = load(&dir);
    unsafe {
        assert_eq!(rs_model_is_presence(model), 1);
        let text = CString::new("The hypothesis predicts what we expect. The red cart slid.").unwrap();
        let mut scores = [7u8; 3];
        let mut total = 0;
        assert_eq!(
            rs_model_assess_text(model, text.as_ptr(), scores.as_mut_ptr(), 3, &mut total),
            RsStatus::Ok
        );
        assert!(scores.iter().all(|&s| s <= 1));
        rs_model_free(model);
    }
}

#[test]
fn load_errors_set_message() {
    let path = CString::new("/nonexistent/checkpoint").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { rs_model_load(path.as_ptr(), &mut model) }, RsStatus::Io);
    assert!(model.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { rs_model_load(ptr::null(), &mut model) }, RsStatus::NullPointer);
    assert_eq!(unsafe { rs_model_num_dimensions(ptr::null()) }, 0);
    unsafe { rs_model_free(ptr::null_mut()) };
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ck");
    checkpoint(&dir, DimensionMode::Scored);
    std::fs::write(dir.join("rubric.json"), "{}").unwrap();
    let path = CString::new(dir.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { rs_model_load(path.as_ptr(), &mut model) },
        RsStatus::Checkpoint
    );
}

#[test]
fn metric_functions() {
    let p = [1.0, 2.0, 3.0];
    let t = [1.0, 2.0, 5.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(rs_mse(p.as_ptr(), t.as_ptr(), 3, &mut out), RsStatus::Ok);
        assert!((out - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            rs_weighted_accuracy(p.as_ptr(), t.as_ptr(), 3, 5.0, &mut out),
            RsStatus::Ok
        );
        assert!((out - (1.0 - 2.0 / 15.0)).abs() < 1e-12);
        assert_eq!(rs_mse(p.as_ptr(), t.as_ptr(), 0, &mut out), RsStatus::Validation);

        let ratings = [1.0, 2.0, 3.0, f64::NAN, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(
            rs_krippendorff_alpha_interval(ratings.as_ptr(), 2, 4, &mut out),
            RsStatus::Ok
        );
        assert!((out - 1.0).abs() < 1e-12);
        let constant = [2.0; 4];
        assert_eq!(
            rs_krippendorff_alpha_interval(constant.as_ptr(), 2, 2, &mut out),
            RsStatus::Ok
        );
        assert_eq!(out, 1.0);
        let unpaired = [1.0, f64::NAN];
        assert_eq!(
            rs_krippendorff_alpha_interval(unpaired.as_ptr(), 2, 1, &mut out),
            RsStatus::UndefinedMetric
        );

        let a = [0usize, 1];
        let b = [0usize, 1, 2];
        assert_eq!(rs_masi_distance(a.as_ptr(), 2, b.as_ptr(), 3, &mut out), RsStatus::Ok);
        assert!((out - (1.0 - 2.0 / 3.0 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(rs_masi_distance(ptr::null(), 0, ptr::null(), 0, &mut out), RsStatus::Ok);
        assert_eq!(out, 0.0);
    }
}

#[test]
fn header_lists_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rubricscore.h")).unwrap();
    for name in [
        "rs_last_error_message",
        "rs_string_free",
        "rs_model_load",
        "rs_model_free",
        "rs_model_num_dimensions",
        "rs_model_dimension_id",
        "rs_model_is_presence",
        "rs_model_assess_text",
        "rs_model_assess_json",
        "rs_mse",
        "rs_weighted_accuracy",
        "rs_krippendorff_alpha_interval",
        "rs_masi_distance",
        "RS_STATUS_BUFFER_TOO_SMALL",
        "typedef struct RsModel RsModel",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rubricscore.h\"\nint main(void) { RsModel *m = 0; return rs_model_num_dimensions(m) == 0 ? 0 : 1; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&header)
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(_) => eprintln!("no C compiler found; skipping"),
    }
}

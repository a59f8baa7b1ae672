//! Command-line behavior: exit codes, error messages, output layout, and
//! rerun determinism, exercised through the compiled binary on small
//! corpora.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reqsense_core::dsp::{Spectrogram, SPEC_LEN};
use reqsense_core::io::{write_feature_set, write_model};
use reqsense_core::models::{CnnWeights, GateWeights, ProductModelWeights};
use reqsense_core::rng::SeededRng;
use reqsense_core::trainer::{FeatureSample, FeatureSet};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_reqsense")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary should launch")
}

fn assert_code(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: expected exit {code}, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

// ---------------------------------------------------------------------------
// Usage and configuration errors (exit 2)
// ---------------------------------------------------------------------------

#[test]
fn missing_spec_file_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["gen-signals", "--spec", "absent.cfg", "--out", "data.csv"],
    );
    assert_code(&out, 2, "missing spec file");
    assert!(
        stderr_of(&out).contains("absent.cfg"),
        "message should name the path: {}",
        stderr_of(&out)
    );
}

#[test]
fn unsupported_resume_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["train", "--resume", "--features", "f.csv", "--out", "model.txt"],
    );
    assert_code(&out, 2, "--resume");
}

#[test]
fn unknown_configuration_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("train.cfg"), "warp_speed = 9\n").unwrap();
    let out = run_in(
        dir.path(),
        &[
            "train",
            "--features",
            "f.csv",
            "--config",
            "train.cfg",
            "--out",
            "model.txt",
        ],
    );
    assert_code(&out, 2, "unknown config key");
    assert!(
        stderr_of(&out).contains("warp_speed"),
        "message should name the key: {}",
        stderr_of(&out)
    );
}

#[test]
fn thresholds_outside_the_unit_interval_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--model",
            "m.txt",
            "--features",
            "f.csv",
            "--threshold",
            "1.5",
            "--out",
            "s.txt",
        ],
    );
    assert_code(&out, 2, "threshold 1.5");
}

// ---------------------------------------------------------------------------
// I/O and format errors (exit 3)
// ---------------------------------------------------------------------------

#[test]
fn missing_data_files_are_io_errors_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "eval",
            "--model",
            "no-such-model.txt",
            "--features",
            "f.csv",
            "--out",
            "s.txt",
        ],
    );
    assert_code(&out, 3, "missing model file");
    assert!(
        stderr_of(&out).contains("no-such-model.txt"),
        "message should name the path: {}",
        stderr_of(&out)
    );
}

#[test]
fn features_reports_the_line_number_of_a_malformed_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("tiny.cfg"),
        "n_motion = 2\nn_easy_noise = 3\nn_spurious_noise = 1\nseed = 3\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["gen-signals", "--spec", "tiny.cfg", "--out", "data.csv"],
    );
    assert_code(&out, 0, "tiny gen-signals");

    // Drop the last sample of the second data row: 767 values instead of 768.
    let text = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let truncated = &lines[2][..lines[2].rfind(',').unwrap()];
    lines[2] = truncated;
    fs::write(dir.path().join("broken.csv"), lines.join("\n") + "\n").unwrap();

    let out = run_in(
        dir.path(),
        &["features", "--data", "broken.csv", "--out", "f.csv"],
    );
    assert_code(&out, 3, "truncated row");
    assert!(
        stderr_of(&out).contains("line 3"),
        "message should carry the line number: {}",
        stderr_of(&out)
    );
}

// ---------------------------------------------------------------------------
// Unmet requirements / dead model (exit 1, outputs still written)
// ---------------------------------------------------------------------------

#[test]
fn train_on_contradictory_data_exits_1_with_best_effort_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // Every sample is the same point; the labels disagree. No model can
    // satisfy the default requirements on this set, whichever side of the
    // threshold the shared prediction lands on.
    let spec = || Spectrogram::from_flat(vec![0.1; SPEC_LEN]).unwrap();
    let samples = (0..44)
        .map(|i| FeatureSample::new(spec(), u8::from(i % 11 == 0)))
        .collect();
    write_feature_set(&dir.path().join("features.csv"), &FeatureSet { samples }).unwrap();

    let out = run_in(
        dir.path(),
        &["train", "--features", "features.csv", "--out", "model.txt"],
    );
    assert_code(&out, 1, "contradictory training set");
    assert!(
        stderr_of(&out).contains("best-effort weights and reports were written"),
        "stderr: {}",
        stderr_of(&out)
    );
    for name in ["model.txt", "report.csv", "report.txt", "model.txt.manifest"] {
        assert!(dir.path().join(name).exists(), "{name} missing after exit 1");
    }
}

// ---------------------------------------------------------------------------
// Rerun determinism of the generators and the extractor
// ---------------------------------------------------------------------------

#[test]
fn gen_toy_writes_the_documented_header_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    fs::write(a.path().join("toy.cfg"), "n_class0 = 60\nn_class1 = 12\nseed = 9\n").unwrap();
    fs::copy(a.path().join("toy.cfg"), b.path().join("toy.cfg")).unwrap();
    for dir in [a.path(), b.path()] {
        let out = run_in(dir, &["gen-toy", "--spec", "toy.cfg", "--out", "toy.csv"]);
        assert_code(&out, 0, "gen-toy");
    }
    let first = fs::read_to_string(a.path().join("toy.csv")).unwrap();
    assert!(first.starts_with("label,x,y\n"), "header: {}", &first[..30]);
    assert_eq!(first.lines().count(), 73, "60 + 12 rows plus header");
    assert_eq!(
        fs::read(a.path().join("toy.csv")).unwrap(),
        fs::read(b.path().join("toy.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("toy.csv.manifest")).unwrap(),
        fs::read(b.path().join("toy.csv.manifest")).unwrap()
    );
}

#[test]
fn signal_generation_and_extraction_rerun_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = "n_motion = 4\nn_easy_noise = 20\nn_spurious_noise = 4\nseed = 3\n";
    fs::write(a.path().join("spec.cfg"), cfg).unwrap();
    fs::write(b.path().join("spec.cfg"), cfg).unwrap();
    for dir in [a.path(), b.path()] {
        let out = run_in(dir, &["gen-signals", "--spec", "spec.cfg", "--out", "data.csv"]);
        assert_code(&out, 0, "gen-signals");
        let out = run_in(dir, &["features", "--data", "data.csv", "--out", "features.csv"]);
        assert_code(&out, 0, "features");
    }
    for name in ["data.csv", "data.csv.manifest", "features.csv", "features.csv.manifest"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

// ---------------------------------------------------------------------------
// Metric exports
// ---------------------------------------------------------------------------

fn summary_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| {
            let (k, v) = l.split_once(" = ")?;
            (k == key).then(|| v.to_string())
        })
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
}

#[test]
fn roc_reports_auc_1_on_perfectly_separated_features() {
    let dir = tempfile::tempdir().unwrap();
    // Silent class-0 rows against loud class-1 rows, scored by a model
    // whose gate passes only high energies: a perfect ranking.
    let mut samples = Vec::new();
    for _ in 0..10 {
        samples.push(FeatureSample::new(
            Spectrogram::from_flat(vec![0.0; SPEC_LEN]).unwrap(),
            0,
        ));
    }
    for _ in 0..5 {
        samples.push(FeatureSample::new(
            Spectrogram::from_flat(vec![3.0; SPEC_LEN]).unwrap(),
            1,
        ));
    }
    write_feature_set(&dir.path().join("features.csv"), &FeatureSet { samples }).unwrap();

    let w = ProductModelWeights {
        gate: GateWeights {
            w11: 2.0,
            w12: -6.0,
            w2a: 1.0,
            w2b: 0.0,
        },
        cnn: CnnWeights::init(&mut SeededRng::new(1)),
        frozen_gate_p1: false,
    };
    write_model(&dir.path().join("model.txt"), &w).unwrap();

    let out = run_in(
        dir.path(),
        &[
            "roc",
            "--model",
            "model.txt",
            "--features",
            "features.csv",
            "--out",
            "roc.csv",
        ],
    );
    assert_code(&out, 0, "roc");
    let summary = fs::read_to_string(dir.path().join("roc.csv.summary")).unwrap();
    assert_eq!(summary_value(&summary, "auc"), "1");
    let curve = fs::read_to_string(dir.path().join("roc.csv")).unwrap();
    assert!(curve.starts_with("threshold,fp_fraction,tp_fraction\n"));
}

#[test]
fn sweep_with_one_ratio_writes_a_single_curve_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("toy.cfg"), "n_class0 = 300\nn_class1 = 60\nseed = 4\n").unwrap();
    let out = run_in(dir.path(), &["gen-toy", "--spec", "toy.cfg", "--out", "toy.csv"]);
    assert_code(&out, 0, "gen-toy");

    fs::write(
        dir.path().join("sweep.cfg"),
        "ratios = 10\niters = 400\nbootstrap_resamples = 50\n",
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &[
            "sweep",
            "--data",
            "toy.csv",
            "--config",
            "sweep.cfg",
            "--out",
            "sweep.csv",
        ],
    );
    assert_code(&out, 0, "sweep");

    assert!(dir.path().join("sweep_ratio_10.csv").exists());
    let ratio_files: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.contains("_ratio_").then_some(name)
        })
        .collect();
    assert_eq!(ratio_files, ["sweep_ratio_10.csv"], "one curve per ratio");

    let summary = fs::read_to_string(dir.path().join("sweep.csv.summary")).unwrap();
    assert!(summary.contains("ratio = 10"), "summary:\n{summary}");
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use xfactor_core::eval::{generate_synthetic, SyntheticConfig};

fn xfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xfactor")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_dataset(dir: &Path, falls: bool) -> String {
    let cfg = SyntheticConfig {
        n_subjects: 3,
        windows_per_subject: 80,
        fall_prevalence: if falls { 0.05 } else { 0.0 },
        ..SyntheticConfig::default()
    };
    let path = dir.join(if falls { "d.csv" } else { "nofall.csv" });
    generate_synthetic(&cfg, 4).unwrap().write_csv(&path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_dataset_exits_2_and_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere.csv");
    let o = xfactor(&["evaluate", "--variant", "xhmm3", "--dataset", missing.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path(), true);
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--bogus"],
        vec!["evaluate", "--dataset", &data],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--variant", "xhmm9"],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--xi-grid", "0.5,2"],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--omega", "-1"],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--cv-folds", "1"],
        vec!["tune", "--dataset", &data, "--seed", "1", "--variant", "hmm1"],
        vec!["inject", "--dataset", &data, "--seed", "1", "--variant", "xhmm3"],
        vec!["inject", "--dataset", &data, "--seed", "1", "--counts", "0,2"],
        vec!["diagnose", "--dataset", &data, "--seed", "1", "--variant", "hmm3_sup"],
        vec!["extract", "--dataset", &data, "--seed", "1", "--schema", "features"],
        vec!["extract", "--dataset", &data, "--seed", "1", "--schema", "nope"],
        vec!["synth", "--seed", "1", "--activities", "1"],
        vec!["evaluate", "--dataset", &data, "--seed", "1", "--config", "/no/such/file.toml"],
    ];
    for args in cases {
        let o = xfactor(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn computation_failure_exits_1_and_leaves_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path(), false);
    let out = tmp.path().join("out");
    // the first variant succeeds, the supervised one cannot train without falls
    let o = xfactor(&[
        "evaluate", "--dataset", &data, "--seed", "1", "--variant", "hmm2,hmm3_sup",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("hmm3_sup"));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path(), true);
    let out = tmp.path().join("out");
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 5\ndataset = {data:?}\nout_dir = {:?}\nvariants = [\"xhmm2\"]\nomega = 1.0\nxi_grid = [1.5, 5.0, 10.0, 100.0]\nmax_iterations = 6\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = xfactor(&["tune", "--config", cfg.to_str().unwrap(), "--omega", "1.2", "--cv-folds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("tune.json")).unwrap()).unwrap();
    let run = &report["run"];
    assert_eq!(run["seed"], 5);
    assert_eq!(run["eval"]["omega"], 1.2);
    assert_eq!(run["eval"]["cv_folds"], 2);
    assert_eq!(run["eval"]["train"]["max_iterations"], 6);
    assert_eq!(run["variants"], serde_json::json!(["xhmm2"]));
    // one row per grid value and inner fold, plus the header
    let trace = fs::read_to_string(out.join("tune_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 4 * 2);
    assert!(trace.lines().skip(1).all(|l| l.starts_with("xhmm2,")));

    fs::write(&cfg, "seed = 5\nwindow = 3\n").unwrap();
    let o = xfactor(&["tune", "--config", cfg.to_str().unwrap(), "--dataset", &data]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("window"));
}

#[test]
fn trained_detector_files_load_back() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path(), true);
    let out = tmp.path().join("out");
    let o = xfactor(&[
        "train", "--dataset", &data, "--seed", "2", "--variant", "xhmm3,hmm1", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for v in ["xhmm3", "hmm1"] {
        let text = fs::read_to_string(out.join(format!("detector_{v}.json"))).unwrap();
        let file = xfactor_core::models::DetectorFile::from_json(&text).unwrap();
        assert_eq!(file.detector.variant.name(), v);
        assert!(file.preprocessing.is_some());
    }
    // inputs are untouched
    let before = fs::read(&data).unwrap();
    assert_eq!(before, generate_synthetic(
        &SyntheticConfig { n_subjects: 3, windows_per_subject: 80, ..SyntheticConfig::default() },
        4,
    ).unwrap().to_csv_bytes().unwrap());
}

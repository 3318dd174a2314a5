//! Black-box tests of the binary: determinism of artifacts, the full
//! synth -> fit -> transform -> train -> eval loop, config-file handling and
//! exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dplm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dplm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap_or("{}")).expect("stdout is JSON")
}

fn error_object(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("{}")).expect("stderr is a JSON error")
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = dplm(
            &[
                "synth",
                "--out",
                sub,
                "--classes",
                "2",
                "--per-class",
                "5",
                "--dim",
                "4",
                "--block-dim",
                "2",
                "--seed",
                "33",
            ],
            dir.path(),
        );
        assert_success(&out);
    }
    let a = fs::read(dir.path().join("a/train.json")).unwrap();
    let b = fs::read(dir.path().join("b/train.json")).unwrap();
    assert_eq!(a, b);
    for i in 0..10 {
        let name = format!("train/{i:04}.csv");
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn fit_writes_identical_model_files_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "2",
            "--per-class",
            "8",
            "--dim",
            "5",
            "--block-dim",
            "2",
            "--seed",
            "9",
        ],
        dir.path(),
    ));
    for model in ["m1.json", "m2.json"] {
        assert_success(&dplm(
            &[
                "fit",
                "--data",
                "ds/train.json",
                "--out",
                model,
                "--target-dim",
                "2",
                "--k-neighbors",
                "3",
                "--max-iterations",
                "15",
            ],
            dir.path(),
        ));
    }
    let a = fs::read(dir.path().join("m1.json")).unwrap();
    let b = fs::read(dir.path().join("m2.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_loop_on_separable_data_reaches_kappa_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "3",
            "--per-class",
            "10",
            "--test-per-class",
            "5",
            "--dim",
            "6",
            "--block-dim",
            "3",
            "--separation",
            "1.2",
            "--noise",
            "0.2",
            "--seed",
            "21",
        ],
        dir.path(),
    ));
    let fit = assert_success(&dplm(
        &[
            "fit",
            "--data",
            "ds/train.json",
            "--out",
            "model.json",
            "--target-dim",
            "3",
            "--k-neighbors",
            "3",
            "--random-init",
            "true",
            "--init-seed",
            "4",
        ],
        dir.path(),
    ));
    assert_eq!(fit["input_dim"], 6);
    assert_eq!(fit["target_dim"], 3);
    for (name, data) in [("train", "ds/train.json"), ("test", "ds/test.json")] {
        assert_success(&dplm(
            &[
                "transform",
                "--model",
                "model.json",
                "--data",
                data,
                "--out",
                "red",
                "--name",
                name,
            ],
            dir.path(),
        ));
    }
    assert_success(&dplm(
        &[
            "train",
            "--data",
            "red/train.json",
            "--classifier",
            "fgmdm",
            "--out",
            "clf.json",
        ],
        dir.path(),
    ));
    let report = assert_success(&dplm(
        &[
            "eval",
            "--model",
            "clf.json",
            "--data",
            "red/test.json",
            "--out",
            "report.json",
        ],
        dir.path(),
    ));
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["kappa"], 1.0);
    // The written report matches the printed one.
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk["kappa"], report["kappa"]);
}

#[test]
fn eval_on_own_single_sample_classes_gives_kappa_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "3",
            "--per-class",
            "1",
            "--dim",
            "4",
            "--structure",
            "isotropic",
            "--noise",
            "0.05",
            "--seed",
            "2",
        ],
        dir.path(),
    ));
    assert_success(&dplm(
        &[
            "train",
            "--data",
            "ds/train.json",
            "--classifier",
            "mdm",
            "--out",
            "clf.json",
        ],
        dir.path(),
    ));
    let report = assert_success(&dplm(
        &["eval", "--model", "clf.json", "--data", "ds/train.json"],
        dir.path(),
    ));
    assert_eq!(report["kappa"], 1.0);
    assert_eq!(report["kappa_degenerate"], false);
}

#[test]
fn fit_with_m_equal_n_reports_zero_objective() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "2",
            "--per-class",
            "6",
            "--dim",
            "4",
            "--block-dim",
            "2",
            "--seed",
            "5",
        ],
        dir.path(),
    ));
    let fit = assert_success(&dplm(
        &[
            "fit",
            "--data",
            "ds/train.json",
            "--out",
            "model.json",
            "--target-dim",
            "4",
            "--k-neighbors",
            "2",
        ],
        dir.path(),
    ));
    assert_eq!(fit["final_objective"], 0.0);
    assert_eq!(fit["iterations"], 0);
    assert_eq!(fit["status"], "converged");
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "2",
            "--per-class",
            "8",
            "--dim",
            "5",
            "--block-dim",
            "2",
            "--seed",
            "8",
        ],
        dir.path(),
    ));
    fs::write(
        dir.path().join("fit.json"),
        r#"{"target-dim": 2, "k-neighbors": 4, "max-iterations": 7}"#,
    )
    .unwrap();
    let fit = assert_success(&dplm(
        &[
            "fit",
            "--data",
            "ds/train.json",
            "--out",
            "model.json",
            "--config",
            "fit.json",
            "--k-neighbors",
            "3",
        ],
        dir.path(),
    ));
    // Flag beat the file; untouched file values survived.
    assert_eq!(fit["config"]["k-neighbors"], 3);
    assert_eq!(fit["config"]["max-iterations"], 7);
    assert_eq!(fit["config"]["target-dim"], 2);
}

#[test]
fn block_structure_keeps_information_in_the_block() {
    use dplm::classify::{mdm_predict, mdm_train};
    use dplm::dplm::LabeledSample;
    use dplm::geometry::MetricKind;
    use dplm::linalg::{congruence, StiefelPoint};

    let dir = tempfile::tempdir().unwrap();
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "3",
            "--per-class",
            "12",
            "--test-per-class",
            "6",
            "--dim",
            "8",
            "--block-dim",
            "3",
            "--seed",
            "14",
        ],
        dir.path(),
    ));
    let (train, _) = dplm::io::load_dataset(&dir.path().join("ds/train.json")).unwrap();
    let (test, _) = dplm::io::load_dataset(&dir.path().join("ds/test.json")).unwrap();

    let accuracy = |train: &[LabeledSample], test: &[LabeledSample]| -> f64 {
        let model = mdm_train(train, MetricKind::Airm).unwrap();
        let hits = test
            .iter()
            .filter(|s| mdm_predict(&model, &s.matrix).unwrap() == s.label)
            .count();
        hits as f64 / test.len() as f64
    };
    let full = accuracy(&train, &test);

    let pick = StiefelPoint::coordinate_selection(8, 3).unwrap();
    let reduce = |set: &[LabeledSample]| -> Vec<LabeledSample> {
        set.iter()
            .map(|s| LabeledSample::new(congruence(&s.matrix, &pick).unwrap(), s.label))
            .collect()
    };
    let block = accuracy(&reduce(&train), &reduce(&test));
    assert!(full >= 0.9, "full-space accuracy {full}");
    assert!((full - block).abs() <= 0.1, "full {full} vs block {block}");
}

#[test]
fn bench_single_point_produces_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dplm(
        &[
            "bench",
            "--out",
            "bench.csv",
            "--sizes",
            "24",
            "--dims",
            "5",
            "--k-neighbors",
            "3",
            "--iterations",
            "2",
            "--repetitions",
            "2",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "N,n,K,seconds_per_iteration");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("24,5,3,"));
    // The sibling metadata file records the resolved config.
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bench.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["iterations"], 2);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();

    // Usage error from clap: unknown flag.
    let out = dplm(&["fit", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // Usage error from validation: missing target dimension.
    assert_success(&dplm(
        &[
            "synth",
            "--out",
            "ds",
            "--classes",
            "2",
            "--per-class",
            "4",
            "--dim",
            "3",
            "--block-dim",
            "2",
            "--seed",
            "1",
        ],
        dir.path(),
    ));
    let out = dplm(
        &["fit", "--data", "ds/train.json", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_object(&out)["error"]["exit_code"], 2);

    // Config error: class smaller than the neighborhood.
    let out = dplm(
        &[
            "fit",
            "--data",
            "ds/train.json",
            "--out",
            "m.json",
            "--target-dim",
            "2",
            "--k-neighbors",
            "9",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // Data error: missing file.
    let out = dplm(
        &[
            "fit",
            "--data",
            "nowhere.json",
            "--out",
            "m.json",
            "--target-dim",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_object(&out)["error"]["kind"], "data");

    // Numerical error: a dataset whose matrix is not positive definite.
    fs::create_dir_all(dir.path().join("bad/train")).unwrap();
    fs::write(dir.path().join("bad/train/0000.csv"), "1,0\n0,-1\n").unwrap();
    fs::write(dir.path().join("bad/train/0001.csv"), "1,0\n0,1\n").unwrap();
    fs::write(
        dir.path().join("bad/train.json"),
        r#"{"format_version":"1","dim":2,"samples":[
            {"label":0,"path":"train/0000.csv"},
            {"label":1,"path":"train/0001.csv"}]}"#,
    )
    .unwrap();
    let out = dplm(
        &[
            "train",
            "--data",
            "bad/train.json",
            "--classifier",
            "mdm",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_object(&out)["error"]["kind"], "numerical");
}

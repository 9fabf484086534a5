use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{"train": {"epochs": 2, "learning_rate": 0.01,
  "encoder": {"dim": 16, "n_heads": 4, "ff_dim": 64, "n_layers": 1, "max_frames": 16, "proj_hidden": 16, "proj_dim": 8},
  "sampling": {"max_frames": 16}}}"#;

fn roboformer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roboformer"))
        .args(args)
        .current_dir(dir)
        .env_remove("ROBOFLOW_CACHE")
        .output()
        .expect("run roboformer")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = roboformer(args, dir);
    assert_eq!(
        code(&out),
        0,
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A small synthetic dataset with a run config beside it.
fn workspace(extra: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synth", "--out", "data", "--videos", "12", "--dim", "16", "--seed", "3"];
    args.extend_from_slice(extra);
    ok(&args, dir.path());
    fs::write(dir.path().join("run.json"), CONFIG).unwrap();
    dir
}

const DATA: [&str; 6] = [
    "--config",
    "run.json",
    "--manifest",
    "data/manifest.csv",
    "--features",
    "data/features",
];

fn with_data<'a>(cmd: &'a str, rest: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend_from_slice(&DATA);
    v.extend_from_slice(rest);
    v
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

#[test]
fn help_succeeds_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&roboformer(&["--help"], dir.path())), 0);
    assert_eq!(code(&roboformer(&["train", "--no-such-flag"], dir.path())), 2);
    assert_eq!(
        code(&roboformer(&["synth", "--out", "x", "--mode", "sideways"], dir.path())),
        2
    );
}

#[test]
fn split_files_are_identical_on_rerun() {
    let dir = workspace(&[]);
    let p = dir.path();
    ok(&with_data("split", &["--out", "a", "--folds", "4", "--seed", "9"]), p);
    ok(&with_data("split", &["--out", "b", "--folds", "4", "--seed", "9"]), p);
    for k in 0..4 {
        let a = fs::read(p.join(format!("a/fold{k}.json"))).unwrap();
        let b = fs::read(p.join(format!("b/fold{k}.json"))).unwrap();
        assert_eq!(a, b, "fold {k}");
    }
}

#[test]
fn too_few_videos_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", "data", "--videos", "3", "--dim", "16"], dir.path());
    let out = roboformer(&["split", "--manifest", "data/manifest.csv", "--out", "s"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_fails_before_work() {
    let dir = workspace(&[]);
    fs::write(dir.path().join("bad.json"), r#"{"n_folds": 0}"#).unwrap();
    let out = roboformer(
        &[
            "train",
            "--config",
            "bad.json",
            "--manifest",
            "data/manifest.csv",
            "--out",
            "r",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("r").exists());
    fs::write(dir.path().join("typo.json"), r#"{"epoch": 3}"#).unwrap();
    let out = roboformer(&["train", "--config", "typo.json"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn training_is_reproducible_and_evaluation_matches() {
    let dir = workspace(&[]);
    let p = dir.path();
    ok(&with_data("train", &["--folds", "2", "--out", "r1", "--plots"]), p);
    ok(&with_data("train", &["--folds", "2", "--out", "r2"]), p);
    for f in ["summary.json", "fold0/report.json", "fold1/predictions.json"] {
        assert_eq!(
            fs::read(p.join("r1").join(f)).unwrap(),
            fs::read(p.join("r2").join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(p.join("r1/roc.svg").is_file());

    ok(&with_data("evaluate", &["--models", "r1", "--out", "e"]), p);
    let trained = json(p.join("r1/fold0/report.json"));
    let evaluated = json(p.join("e/fold0/report.json"));
    assert_eq!(trained["macro_auc"], evaluated["macro_auc"]);
}

#[test]
fn evaluate_without_checkpoints_exits_4() {
    let dir = workspace(&[]);
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = roboformer(&with_data("evaluate", &["--models", "empty", "--out", "e"]), dir.path());
    assert_eq!(code(&out), 4);
}

#[test]
fn missing_features_exit_3_and_are_listed() {
    let dir = workspace(&[]);
    let p = dir.path();
    for ext in ["json", "rffs"] {
        fs::remove_file(p.join(format!("data/features/video004.flow.{ext}"))).unwrap();
    }
    let out = roboformer(&with_data("train", &["--folds", "2", "--out", "r"]), p);
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing video004 flow"), "{stderr}");
    assert!(!p.join("r").exists());
}

#[test]
fn ensembles_across_taxonomies_exit_5() {
    let two = workspace(&[]);
    let four = workspace(&["--classes", "4"]);
    ok(&with_data("train", &["--folds", "2", "--out", "r"]), two.path());
    ok(&with_data("train", &["--folds", "2", "--out", "r"]), four.path());
    let other = four.path().join("r/fold0/checkpoint.bin");
    let out = roboformer(
        &with_data("infer", &["--models", "r", other.to_str().unwrap(), "--out", "t"]),
        two.path(),
    );
    assert_eq!(code(&out), 5);
}

#[test]
fn explaining_a_mean_pool_model_exits_6() {
    let dir = workspace(&[]);
    let p = dir.path();
    ok(
        &with_data("train", &["--folds", "2", "--out", "r", "--ablation", "no_sa"]),
        p,
    );
    let out = roboformer(
        &with_data(
            "explain",
            &[
                "--checkpoint",
                "r/fold0/checkpoint.bin",
                "--video",
                "video000",
                "--start",
                "1",
                "--end",
                "4",
                "--out",
                "x",
            ],
        ),
        p,
    );
    assert_eq!(code(&out), 6);

    ok(&with_data("train", &["--folds", "2", "--out", "full"]), p);
    ok(
        &with_data(
            "explain",
            &[
                "--checkpoint",
                "full/fold0/checkpoint.bin",
                "--video",
                "video000",
                "--start",
                "1",
                "--end",
                "4",
                "--out",
                "x",
                "--plots",
            ],
        ),
        p,
    );
    let e = json(p.join("x/explanation.json"));
    let weights: Vec<f64> = e["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w.as_f64().unwrap())
        .collect();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(p.join("x/attention.svg").is_file());
}

#[test]
fn timeline_has_one_row_per_second_and_respects_the_gate() {
    let dir = workspace(&[
        "--segments-per-video",
        "24",
        "--min-segment",
        "5",
        "--max-segment",
        "5",
        "--gap",
        "0",
    ]);
    let p = dir.path();
    ok(&with_data("train", &["--folds", "2", "--out", "r"]), p);
    ok(
        &with_data(
            "infer",
            &["--models", "r", "--video", "video001", "--out", "t", "--plots"],
        ),
        p,
    );
    let t = json(p.join("t/video001.timeline.json"));
    let rows = t["intervals"].as_array().unwrap();
    assert_eq!(rows.len(), 120);
    assert!(p.join("t/video001.timeline.svg").is_file());

    ok(
        &with_data(
            "infer",
            &["--models", "r", "--video", "video001", "--out", "z", "--threshold", "0"],
        ),
        p,
    );
    let z = json(p.join("z/video001.timeline.json"));
    for row in z["intervals"].as_array().unwrap() {
        if !row["predicted"].is_null() {
            assert_eq!(row["entropy"].as_f64().unwrap(), 0.0, "{row}");
        }
    }
}

#[test]
fn ablate_writes_a_table_for_every_setting() {
    let dir = workspace(&[]);
    let p = dir.path();
    let out = ok(&with_data("ablate", &["--folds", "2", "--out", "a"]), p);
    let table = String::from_utf8_lossy(&out.stdout);
    for s in ["full", "no_tta", "no_rgb", "no_flow", "no_sa"] {
        assert!(table.contains(s), "{table}");
        assert!(p.join("a").join(s).join("summary.json").is_file());
    }
    let rows = json(p.join("a/ablation.json"));
    assert_eq!(rows.as_array().unwrap().len(), 5);
    assert_eq!(rows[0]["delta_auc"].as_f64(), Some(0.0));
    let csv = fs::read_to_string(p.join("a/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "\
data.source=synthetic
data.train_images=200
data.test_images=80
patches.count=1500
model.hidden=8
train.epochs=3
train.eval_subset=800
encoder.stride=2
";

fn grbm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grbm"))
        .current_dir(dir)
        .env_remove("GRBM_OUT_ROOT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup(config: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    fs::write(&path, config).unwrap();
    (dir, path)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn ok(out: &Output) {
    assert_eq!(code(out), 0, "stderr: {}", stderr(out));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let (dir, _) = setup("train.learnign_rate=0.1\n");
    let out = grbm(dir.path(), &["train", "--config", "run.conf"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("train.learnign_rate"));

    let out = grbm(dir.path(), &["verify", "--theta", "NaN"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = grbm(dir.path(), &["verify", "--threads", "0"]);
    assert_eq!(code(&out), 2);
    let out = grbm(dir.path(), &["verify", "--config", "absent.conf"]);
    assert_eq!(code(&out), 2);
    let out = grbm(dir.path(), &["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_artifacts_exit_4_and_name_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = grbm(dir.path(), &["select-stop", "--out", "nothing"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("grbm train"), "{}", stderr(&out));

    let out = grbm(dir.path(), &["train", "--out", "r"]);
    assert_eq!(code(&out), 4, "default source is CIFAR, which is absent here");
    assert!(stderr(&out).contains("CIFAR-10"));
    assert!(!dir.path().join("r").exists());

    let (dir, _) = setup(SMALL);
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "r"]));
    let out = grbm(dir.path(), &["features", "--out", "r"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("grbm select-stop"));
    let out = grbm(dir.path(), &["classify", "--out", "r"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("grbm features"));
}

#[test]
fn metrics_log_has_one_line_per_epoch_plus_initial() {
    let (dir, _) = setup(SMALL);
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "r", "--seed", "5"]));
    let hash = fs::read_to_string(dir.path().join("r/config.sha256")).unwrap();
    let text = fs::read_to_string(dir.path().join("r/metrics.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for (epoch, line) in lines.iter().enumerate() {
        assert_eq!(line["epoch"], epoch);
        for key in ["ami", "fed", "mean_abs_weight", "sparsity_mean"] {
            assert!(line[key].is_number(), "{key} in {line}");
        }
        assert_eq!(line["seed"], 5);
        assert_eq!(line["config_hash"], hash.trim());
    }
    for name in ["trace.json", "units.json", "preprocess.json", "session.json"] {
        let v = json(&dir.path().join("r").join(name));
        assert_eq!(v["config_hash"], hash.trim(), "{name}");
        assert_eq!(v["seed"], 5, "{name}");
    }
    let manifest = json(&dir.path().join("r/checkpoints/manifest.json"));
    assert!(manifest["run_id"].as_str().unwrap().starts_with(&hash[..16]));
    assert!(dir.path().join("r/ami.svg").exists());
    assert!(dir.path().join("r/filter_norms.svg").exists());

    let (dir, _) = setup(&SMALL.replace("train.epochs=3", "train.epochs=0"));
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "r"]));
    let text = fs::read_to_string(dir.path().join("r/metrics.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (dir, _) = setup(SMALL);
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "full"]));
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "part", "--until", "1"]));
    let partial = fs::read_to_string(dir.path().join("part/metrics.jsonl")).unwrap();
    assert_eq!(partial.lines().count(), 2);
    ok(&grbm(dir.path(), &["train", "--config", "run.conf", "--out", "part", "--resume"]));
    for name in ["metrics.jsonl", "session.json", "trace.json", "units.json", "checkpoints/epoch-00003.grbm"] {
        assert_eq!(
            fs::read(dir.path().join("full").join(name)).unwrap(),
            fs::read(dir.path().join("part").join(name)).unwrap(),
            "{name}"
        );
    }
    let out = grbm(dir.path(), &["train", "--config", "run.conf", "--out", "part", "--resume", "--seed", "9"]);
    assert_eq!(code(&out), 2);
    let out = grbm(dir.path(), &["train", "--config", "run.conf", "--out", "fresh", "--resume"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn staged_commands_produce_stamped_artifacts_and_are_idempotent() {
    let (dir, _) = setup(SMALL);
    let d = dir.path();
    ok(&grbm(d, &["train", "--config", "run.conf", "--out", "r"]));
    ok(&grbm(d, &["select-stop", "--out", "r", "--theta", "-0.7"]));
    let first = fs::read(d.join("r/selection.json")).unwrap();
    ok(&grbm(d, &["select-stop", "--out", "r", "--theta", "-0.7"]));
    assert_eq!(first, fs::read(d.join("r/selection.json")).unwrap());
    let sel = json(&d.join("r/selection.json"));
    assert_eq!(sel["theta"], -0.7);
    let t_star = sel["t_star"].as_u64().unwrap();
    assert_eq!(sel["checkpoint_id"], format!("epoch-{t_star:05}"));

    ok(&grbm(d, &["features", "--out", "r"]));
    let train_features = fs::read(d.join("r/features/train.dset")).unwrap();
    ok(&grbm(d, &["features", "--out", "r"]));
    assert_eq!(train_features, fs::read(d.join("r/features/train.dset")).unwrap());
    ok(&grbm(d, &["classify", "--out", "r"]));
    let report = json(&d.join("r/classify.json"));
    let acc = report["test_accuracy"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));
    assert_eq!(report["t_star"], t_star);
    let hash = fs::read_to_string(d.join("r/config.sha256")).unwrap();
    for name in ["features/train.dset.meta.json", "features/test.dset.meta.json", "svm.svmm.meta.json", "classify.json"] {
        assert_eq!(json(&d.join("r").join(name))["config_hash"], hash.trim(), "{name}");
    }

    // a different config for an existing run is refused
    let out = grbm(d, &["select-stop", "--out", "r", "--seed", "3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn retraining_invalidates_downstream_artifacts() {
    let (dir, _) = setup(SMALL);
    let d = dir.path();
    ok(&grbm(d, &["train", "--config", "run.conf", "--out", "r"]));
    ok(&grbm(d, &["select-stop", "--out", "r"]));
    ok(&grbm(d, &["train", "--config", "run.conf", "--out", "r", "--seed", "1"]));
    let out = grbm(d, &["features", "--out", "r"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("different config"));
}

#[test]
fn pipeline_reports_every_theta_and_is_byte_identical_on_rerun() {
    let (dir, _) = setup(SMALL);
    let d = dir.path();
    ok(&grbm(d, &["pipeline", "--config", "run.conf", "--out", "a"]));
    ok(&grbm(d, &["pipeline", "--config", "run.conf", "--out", "b"]));
    for name in ["pipeline.json", "metrics.jsonl", "trace.json", "units.json"] {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name}");
    }
    let report = json(&d.join("a/pipeline.json"));
    let thetas: Vec<f64> = report["selections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["theta"].as_f64().unwrap())
        .collect();
    assert_eq!(thetas, vec![-1.5, -0.7, 0.0, 0.7, 1.5]);
    assert_eq!(report["final_epoch"], 3);
    assert_eq!(report["ami"].as_array().unwrap().len(), 4);
    let peak = report["peak_epoch"].as_u64().unwrap();
    let at_zero = &report["selections"][2];
    assert_eq!(at_zero["t_star"], peak);
}

#[test]
fn pipeline_without_epochs_or_images_writes_no_report() {
    let (dir, _) = setup(&SMALL.replace("train.epochs=3", "train.epochs=0"));
    let out = grbm(dir.path(), &["pipeline", "--config", "run.conf", "--out", "p"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("p/pipeline.json").exists());
}

#[test]
fn toy_emits_snapshots_logs_and_plots() {
    let (dir, _) = setup("toy.epochs=12\ntoy.snapshots=10,140,2000\n");
    ok(&grbm(dir.path(), &["toy", "--config", "run.conf", "--out", "t"]));
    let t = dir.path().join("t");
    assert!(t.join("toy_epoch_00000.svg").exists());
    assert!(t.join("toy_epoch_00010.svg").exists());
    assert!(!t.join("toy_epoch_00140.svg").exists());
    assert!(t.join("toy_norms.svg").exists() && t.join("toy_ami.svg").exists());
    let log = fs::read_to_string(t.join("toy.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 13);
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["filter_norms"].as_array().unwrap().len(), 4);
    assert!(last["attenuated"].is_u64());
    assert_eq!(json(&t.join("toy.json"))["snapshots"], serde_json::json!([0, 10]));

    let (dir, _) = setup("toy.epochs=0\n");
    ok(&grbm(dir.path(), &["toy", "--config", "run.conf", "--out", "t"]));
    let svgs: Vec<_> = fs::read_dir(dir.path().join("t"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("toy_epoch_"))
        .collect();
    assert_eq!(svgs, vec!["toy_epoch_00000.svg".to_string()]);
}

#[test]
fn verify_passes_on_seeded_tiny_models() {
    let (dir, _) = setup("verify.count=6\n");
    let out = grbm(dir.path(), &["verify", "--config", "run.conf", "--out", "v"]);
    ok(&out);
    let report = json(&dir.path().join("v/verify.json"));
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["cases"].as_array().unwrap().len(), 6);
}

#[test]
fn locked_run_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("v")).unwrap();
    fs::write(dir.path().join("v/.lock"), "1\n").unwrap();
    let out = grbm(dir.path(), &["verify", "--out", "v"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("locked"));
    fs::remove_file(dir.path().join("v/.lock")).unwrap();
    fs::write(dir.path().join("v.conf"), "verify.count=1\n").unwrap();
    ok(&grbm(dir.path(), &["verify", "--config", "v.conf", "--out", "v"]));
    assert!(!dir.path().join("v/.lock").exists());
}

#[test]
fn output_root_override_applies_to_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("root");
    fs::write(dir.path().join("v.conf"), "verify.count=1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_grbm"))
        .current_dir(dir.path())
        .env("GRBM_OUT_ROOT", &root)
        .args(["verify", "--config", "v.conf", "--out", "v"])
        .output()
        .unwrap();
    ok(&out);
    assert!(root.join("v/verify.json").exists());
    assert!(!dir.path().join("v").exists());
}

use std::path::Path;
use std::process::{Command, Output};

fn udae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udae")).args(args).output().expect("spawn udae")
}

fn ok(args: &[&str]) -> String {
    let out = udae(args);
    assert!(
        out.status.success(),
        "udae {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn version_names_the_build() {
    let v = ok(&["--version"]);
    assert!(v.starts_with("udae "), "{v}");
    assert!(v.contains("rev "), "{v}");
    assert!(v.contains("kernels"), "{v}");
}

#[test]
fn bad_arguments_exit_nonzero() {
    assert_eq!(udae(&["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(udae(&["frobnicate"]).status.code(), Some(2));
    let missing = udae(&["evaluate", "--data", "/nonexistent/dataset"]);
    assert!(!missing.status.success());
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    assert!(out.contains("max relative error"), "{out}");
}

#[test]
fn gradcheck_fails_on_impossible_tolerance() {
    let out = udae(&["gradcheck", "--tolerance", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn restore_on_empty_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (input, run, out) = (tmp.path().join("in"), tmp.path().join("run"), tmp.path().join("out"));
    std::fs::create_dir_all(&input).unwrap();
    std::fs::write(input.join("notes.txt"), "not an image").unwrap();
    let data = tmp.path().join("data");
    ok(&["gen-data", "--out", s(&data), "--count", "4", "--size", "16"]);
    ok(&["train", "--data", s(&data), "--out", s(&run), "--depth", "1", "--base", "2", "--epochs", "0"]);
    let text = ok(&["restore", "--model", s(&run.join("model.udae")), "--in", s(&input), "--out", s(&out)]);
    assert!(text.starts_with("0 images processed"), "{text}");
}

#[test]
fn restore_keeps_image_size() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, run, out) = (tmp.path().join("data"), tmp.path().join("run"), tmp.path().join("out"));
    ok(&["gen-data", "--out", s(&data), "--count", "3", "--size", "20"]);
    ok(&["train", "--data", s(&data), "--out", s(&run), "--depth", "2", "--base", "2", "--epochs", "0"]);
    let text = ok(&["restore", "--model", s(&run.join("model.udae")), "--in", s(&data), "--out", s(&out)]);
    assert!(text.starts_with("6 images processed, 0 skipped"), "{text}");
    let img = udae::image_io::read_image(out.join("00000_distorted.png")).unwrap();
    assert_eq!((img.width(), img.height()), (20, 20));
    assert!(out.join("index.json").exists());
}

#[test]
fn zero_epochs_writes_initial_weights() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, a, b) = (tmp.path().join("data"), tmp.path().join("a"), tmp.path().join("b"));
    ok(&["gen-data", "--out", s(&data), "--count", "4", "--size", "16"]);
    ok(&["train", "--data", s(&data), "--out", s(&a), "--depth", "1", "--base", "2", "--epochs", "0", "--seed", "3"]);
    let initial = udae::unet::build_model(udae::UNetConfig::new(1, 2).unwrap(), 3).unwrap();
    assert_eq!(std::fs::read(a.join("model.udae")).unwrap(), initial.to_bytes());

    // resuming a finished run leaves the checkpoint untouched
    ok(&["train", "--data", s(&data), "--out", s(&a), "--depth", "1", "--base", "2", "--epochs", "2"]);
    let ckpt = a.join("checkpoints").join("epoch_0002.udae");
    ok(&["train", "--data", s(&data), "--out", s(&b), "--resume", s(&ckpt), "--epochs", "2"]);
    assert_eq!(std::fs::read(b.join("model.udae")).unwrap(), std::fs::read(&ckpt).unwrap());
}

#[test]
fn config_file_sets_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let config = tmp.path().join("run.json");
    std::fs::write(&config, r#"{"gen-data": {"count": 5, "size": 16, "seed": 7}}"#).unwrap();
    let text = ok(&["--config", s(&config), "gen-data", "--out", s(&data)]);
    assert!(text.starts_with("wrote 5 pairs"), "{text}");
    let manifest = udae::degrade::load_manifest(&data).unwrap();
    assert_eq!((manifest.seed, manifest.size), (7, 16));

    let text = ok(&["gen-data", "--config", s(&config), "--out", s(&data), "--count", "6"]);
    assert!(text.starts_with("wrote 6 pairs"), "{text}");

    std::fs::write(&config, r#"{"gen-data": {"count": [1, 2]}}"#).unwrap();
    assert!(!udae(&["--config", s(&config), "gen-data", "--out", s(&data)]).status.success());
}

#[test]
fn evaluate_identity_scores_the_distortion() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, eval) = (tmp.path().join("data"), tmp.path().join("eval"));
    ok(&["gen-data", "--out", s(&data), "--count", "30", "--size", "32", "--seed", "1"]);
    ok(&["evaluate", "--identity", "--data", s(&data), "--split", "train", "--out", s(&eval)]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v["model_id"], "identity");
    assert!(v["mean_mse"].as_f64().unwrap() > 0.0);
    assert!(v["mean_ssim"].as_f64().unwrap() < 1.0);
    assert!(v.get("timing").is_none());
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + v["count"].as_u64().unwrap() as usize);
}

#[test]
fn pipeline_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for k in ["a", "b"] {
        let root = tmp.path().join(k);
        let (data, run, eval) = (root.join("data"), root.join("run"), root.join("eval"));
        ok(&["gen-data", "--out", s(&data), "--count", "12", "--size", "16", "--seed", "5"]);
        ok(&["train", "--data", s(&data), "--out", s(&run), "--depth", "1", "--base", "4", "--epochs", "2", "--seed", "5"]);
        ok(&["evaluate", "--model", s(&run.join("model.udae")), "--data", s(&data), "--out", s(&eval)]);
        let files: Vec<Vec<u8>> = [
            data.join("manifest.json"),
            data.join("00003_distorted.png"),
            run.join("loss.csv"),
            run.join("steps.csv"),
            run.join("model.udae"),
            eval.join("metrics.json"),
            eval.join("metrics.csv"),
        ]
        .iter()
        .map(|p| std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect();
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn poremamba(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poremamba"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = out.join("run.json");
    fs::write(&config, r#"{"synth": {"sigma": 1.5, "radius": 4}, "model": {"vim": {"patch": 4}}}"#).unwrap();
    let cfg = config.to_str().unwrap();

    let o = poremamba(out, &["--config", cfg, "--seed", "5", "generate", "--count", "12", "--n", "8"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("wrote 12 samples"));

    let o = poremamba(out, &["--config", cfg, "simulate"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("solved 12 samples"));

    let o = poremamba(out, &["--config", cfg, "--seed", "5", "train", "--epochs", "2", "--batch-size", "4"]);
    assert!(o.status.success(), "{o:?}");
    assert!(out.join("model.ckpt").exists() && out.join("train_log.csv").exists());

    let o = poremamba(out, &["eval", "--split", "train"]);
    assert!(o.status.success(), "{o:?}");
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["rmse_mD"].as_f64().unwrap().is_finite());

    let o = poremamba(out, &["plotdata", "--input", out.join("metrics_scatter.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    assert!(fs::read_to_string(out.join("metrics_scatter.svg")).unwrap().starts_with("<svg"));

    let o = poremamba(out, &["bench", "--n", "32", "--patches", "4,8,16"]);
    assert!(o.status.success(), "{o:?}");
    assert!(fs::read_to_string(out.join("bench.csv")).unwrap().lines().count() == 7);
}

#[test]
fn errors_exit_nonzero_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = poremamba(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("not found"), "{err}");

    let o = poremamba(dir.path(), &["train", "--lr=-1"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"learning_rate": 0.1}}"#).unwrap();
    let o = poremamba(dir.path(), &["--config", bad.to_str().unwrap(), "bench"]);
    assert_eq!(o.status.code(), Some(1));
}

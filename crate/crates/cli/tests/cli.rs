use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[autoencoder]
hidden = [32]
epochs = 5
[forward]
hidden = [16]
epochs = 3
mc_train = 4
mc_pred = 50
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-calib"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn step_by_step_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let (data, ae, model, sweep) = (
        dir.path().join("data"),
        dir.path().join("ae"),
        dir.path().join("model"),
        dir.path().join("sweep"),
    );

    ok(&[
        "gen-data",
        "--n",
        "120",
        "--seed",
        "3",
        "--profile",
        "ramp:1.75",
        "--out",
        p(&data),
    ]);
    assert!(data.join("manifest.json").is_file() && data.join("images.csv").is_file());
    ok(&[
        "train-ae",
        "--data",
        p(&data),
        "--seed",
        "3",
        "--out",
        p(&ae),
        "--config",
        p(&cfg),
    ]);
    assert!(ae.join("reconstruction_r2.csv").is_file());
    ok(&[
        "train-forward",
        "--data",
        p(&data),
        "--ae",
        p(&ae),
        "--keep-rate",
        "0.9",
        "--seed",
        "3",
        "--out",
        p(&model),
        "--config",
        p(&cfg),
    ]);
    assert!(model.join("fwd_meta.json").is_file());

    let cal = ok(&[
        "calibrate",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--ae",
        p(&ae),
        "--split",
        "validation",
    ]);
    assert!(cal.contains("mean calibration error"), "{cal}");

    let table = ok(&[
        "sweep",
        "--data",
        p(&data),
        "--ae",
        p(&ae),
        "--keep-rates",
        "0.9,0.95",
        "--seed",
        "3",
        "--out",
        p(&sweep),
        "--config",
        p(&cfg),
    ]);
    assert!(table.starts_with("keep_rate,validation_error,test_error,selected"));
    assert_eq!(table.lines().count(), 3);
    assert!(sweep.join("sweep.csv").is_file() && sweep.join("selected").join("curves.csv").is_file());
}

#[test]
fn report_lists_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["report", "--run", p(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("missing artifacts") && err.contains("sweep/sweep.csv"),
        "{err}"
    );
}

#[test]
fn rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["gen-data", "--profile", "triangle", "--out", p(&dir.path().join("d"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown density profile"));
    assert!(
        !bin(&["sweep", "--data", "x", "--ae", "y", "--keep-rates", "0.9", "--out", "z"])
            .status
            .success()
    );
}

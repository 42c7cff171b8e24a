use std::path::Path;

use latent_calib::experiments::report::{render_report, FIGURES, REQUIRED};
use latent_calib::experiments::{run_all, RunConfig};

fn tiny() -> RunConfig {
    toml::from_str(
        r#"
seed = 11
[data]
n = 150
[autoencoder]
hidden = [32]
epochs = 5
[forward]
hidden = [16]
epochs = 3
mc_train = 4
mc_pred = 40
[sweep]
keep_rates = [0.9, 0.95]
[toy]
m = 40
epochs = 3
replicates = 3
[contours]
s_pred = 20
[density]
n_eval = 11
s_pred = 20
"#,
    )
    .unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn tiny_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path();
    let summary = run_all(&tiny(), run).unwrap();
    for rel in REQUIRED {
        assert!(run.join(rel).is_file(), "missing {rel}");
    }
    for f in FIGURES {
        assert!(run.join("report").join(f).is_file(), "missing figure {f}");
    }
    assert!(run.join("config.json").is_file() && run.join("summary.json").is_file());
    assert!(summary.sweep.iter().any(|&(k, _, _)| k == summary.selected_keep_rate));

    let resolved = RunConfig::load(&run.join("config.json")).unwrap();
    assert_eq!(resolved.autoencoder.seed, resolved.seeds().autoencoder);

    let svg = String::from_utf8(read(&run.join("report/calibration_curves.svg"))).unwrap();
    assert_eq!(svg.matches("class=\"series\"").count(), 8);
    assert_eq!(svg.matches("class=\"diagonal\"").count(), 1);

    let before: Vec<Vec<u8>> = FIGURES.iter().map(|f| read(&run.join("report").join(f))).collect();
    let text = read(&run.join("report/summary.txt"));
    render_report(run).unwrap();
    let after: Vec<Vec<u8>> = FIGURES.iter().map(|f| read(&run.join("report").join(f))).collect();
    assert_eq!(before, after);
    assert_eq!(text, read(&run.join("report/summary.txt")));
}

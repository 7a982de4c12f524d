//! Black-box tests of the `isom` binary: flag handling, exit codes, and
//! byte-level determinism of every randomized command.

use std::path::Path;
use std::process::{Command, Output};

use isom_core::solver::{fit, FitDocument};
use isom_core::{DesignSample, ScaleMethod, ScoreFamily};

fn isom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isom"))
        .args(args)
        .env_remove("ISOM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_csv(dir: &Path, name: &str, rows: &[(f64, f64)]) -> String {
    let path = dir.join(name);
    let mut text = String::from("# generated test series\nt,x\n");
    for (t, x) in rows {
        text.push_str(&format!("{t},{x}\n"));
    }
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn noisy_series(n: usize) -> Vec<(f64, f64)> {
    // deterministic pseudo-noise; no monotone run of equal responses
    (1..=n)
        .map(|i| {
            let t = i as f64 / (n + 1) as f64;
            (t, 10.0 + 5.0 * t * t + ((i as f64 * 2.7).sin()))
        })
        .collect()
}

#[test]
fn fit_monotone_identity_and_violator_pooling() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "mono.csv", &[(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)]);
    let out = isom(&["fit", "--input", &path, "--family", "l2", "--scale", "fixed:1"]);
    assert!(out.status.success());
    let doc: FitDocument = serde_json::from_str(&stdout(&out)).unwrap();
    let levels: Vec<f64> = doc.blocks.iter().map(|b| b.level).collect();
    assert_eq!(levels, vec![1.0, 2.0, 3.0]);

    let path = write_csv(dir.path(), "viol.csv", &[(0.1, 1.0), (0.2, 3.0), (0.3, 1.0)]);
    let out = isom(&["fit", "--input", &path, "--family", "l2", "--scale", "fixed:1"]);
    assert!(out.status.success());
    let doc: FitDocument = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc.blocks.len(), 2);
    assert_eq!(doc.blocks[1].level, 2.0);
}

#[test]
fn fit_matches_library_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let rows = noisy_series(40);
    let path = write_csv(dir.path(), "series.csv", &rows);
    let out =
        isom(&["fit", "--input", &path, "--family", "huber:k=0.98", "--scale", "diffm"]);
    assert!(out.status.success());

    let sample = DesignSample::new(rows).unwrap();
    let expected = fit(&sample, &ScoreFamily::Huber { k: 0.98 }, &ScaleMethod::diffm()).unwrap();
    let expected_json = serde_json::to_string_pretty(&expected.to_document()).unwrap();
    assert_eq!(stdout(&out).trim_end(), expected_json);
}

#[test]
fn fit_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "series.csv", &noisy_series(25));
    let out = isom(&["fit", "--input", &path]);
    assert!(out.status.success());
    let text = stdout(&out);
    let doc: FitDocument = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&doc).unwrap();
    assert_eq!(text.trim_end(), again);
}

#[test]
fn decreasing_direction_negates_around_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = noisy_series(20).into_iter().map(|(t, x)| (t, -x)).collect();
    let path = write_csv(dir.path(), "down.csv", &rows);
    let out = isom(&[
        "fit",
        "--input",
        &path,
        "--family",
        "l2",
        "--scale",
        "fixed:1",
        "--direction",
        "decreasing",
    ]);
    assert!(out.status.success());
    let doc: FitDocument = serde_json::from_str(&stdout(&out)).unwrap();
    // levels are reported in user coordinates, so they must be nonincreasing
    for w in doc.blocks.windows(2) {
        assert!(w[0].level >= w[1].level);
    }
}

#[test]
fn fit_writes_fitted_csv_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "series.csv", &noisy_series(12));
    let fitted = dir.path().join("fitted.csv");
    let plot = dir.path().join("plot.csv");
    let out = isom(&[
        "fit",
        "--input",
        &path,
        "--fitted-csv",
        fitted.to_str().unwrap(),
        "--plot-data",
        plot.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let fitted = std::fs::read_to_string(fitted).unwrap();
    assert!(fitted.starts_with("t,x,fitted,residual\n"));
    assert_eq!(fitted.lines().count(), 13);
    let plot = std::fs::read_to_string(plot).unwrap();
    assert!(plot.starts_with("series,t,value\n"));
    assert!(plot.contains("point,") && plot.contains("step,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    // 2: malformed data row, message names the row
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1,1\n0.2,nan\n").unwrap();
    let out = isom(&["fit", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    // 3: constant responses make every successive difference zero
    let flat = write_csv(dir.path(), "flat.csv", &[(0.1, 5.0), (0.2, 5.0), (0.3, 5.0)]);
    let out = isom(&["fit", "--input", &flat, "--scale", "diffm"]);
    assert_eq!(out.status.code(), Some(3));

    // 4: unknown flag value and unknown flag
    let mono = write_csv(dir.path(), "mono.csv", &[(0.1, 1.0), (0.2, 2.0)]);
    let out = isom(&["fit", "--input", &mono, "--family", "bogus"]);
    assert_eq!(out.status.code(), Some(4));
    let out = isom(&["fit", "--input", &mono, "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn randomized_commands_are_byte_reproducible() {
    let a = isom(&["chernoff", "--reps", "50", "--seed", "7"]);
    let b = isom(&["chernoff", "--reps", "50", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = isom(&["chernoff", "--reps", "50", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);

    let a = isom(&["table1", "--reps", "4", "--seed", "3"]);
    let b = isom(&["table1", "--reps", "4", "--seed", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_env_var_is_the_default() {
    let flagged = isom(&["chernoff", "--reps", "20", "--seed", "123"]);
    let via_env = Command::new(env!("CARGO_BIN_EXE_isom"))
        .args(["chernoff", "--reps", "20"])
        .env("ISOM_SEED", "123")
        .output()
        .unwrap();
    assert_eq!(flagged.stdout, via_env.stdout);
}

#[test]
fn diagnostics_emit_expected_values() {
    let out = isom(&["breakdown", "--H", "0.5"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((doc["bound"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);

    let out = isom(&[
        "avar", "--family", "l2", "--error", "normal", "--mu-prime", "5", "--h", "1",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((doc["avar"].as_f64().unwrap() - 1.92).abs() < 0.02);

    let out = isom(&[
        "influence", "--family", "huber:k=0.98", "--error", "normal", "--t-star", "0.3",
        "--x-star", "100", "--t0", "0.5", "--mu-t0", "11.25", "--mu-prime", "5",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["influence"].as_f64().unwrap(), 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = write_csv(dir.path(), "series.csv", &noisy_series(30));
    let out = isom(&[
        "probe", "--csv", &path, "--outliers", "0", "--at", "0.5", "--value", "1e6",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["deviation"].as_f64().unwrap(), 0.0);
}

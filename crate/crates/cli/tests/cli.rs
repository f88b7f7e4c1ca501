use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn alkspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alkspin"))
        .args(args)
        .env("ALKSPIN_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn check_reports_baseline_controllable() {
    let out = alkspin(&["check", "--config", "cs-baseline"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("dimension 255/255, controllable"));
}

#[test]
fn check_reports_rf_only_not_controllable() {
    let out = alkspin(&["check", "--config", "cs-rf-only"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("not controllable"));
}

#[test]
fn check_missing_file_names_path() {
    let out = alkspin(&["check", "--config", "/definitely/missing/alkspin.toml"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/definitely/missing/alkspin.toml"));
}

#[test]
fn check_malformed_config_names_key() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "schema = \"alkspin-config/1\"\npreset = \"cs-baseline\"\nrf_detuning = \"3 furlongs\"\n",
    )
    .unwrap();
    let out = alkspin(&["check", "--config", path(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("rf_detuning"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&alkspin(&["frobnicate"])), 1);
    assert_eq!(code(&alkspin(&["optimize", "--config", "cs-baseline"])), 1);
    assert_eq!(code(&alkspin(&["--help"])), 0);
}

#[test]
fn optimize_rejects_unnormalized_target_before_compute() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("run");
    let out = alkspin(&[
        "optimize", "--config", "cs-baseline", "--target", "4,4=1;3,-3=1", "--time", "20", "--out",
        path(&out_dir),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--target"), "{}", stderr(&out));
    assert!(!out_dir.exists());
}

fn short_optimize(out_dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "optimize", "--config", "cs-baseline", "--target", "stretched-plus-cat", "--time", "20", "--seeds", "1",
        "--seed", "7", "--max-iterations", "15", "--out", path(out_dir),
    ];
    args.extend_from_slice(extra);
    alkspin(&args)
}

#[test]
fn optimize_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&short_optimize(&a, &[])), 0);
    assert_eq!(code(&short_optimize(&b, &[])), 0);
    for f in ["waveform.csv", "fidelity.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (mut ra, mut rb) = (read_json(&a.join("run.json")), read_json(&b.join("run.json")));
    ra["wall_time_s"] = Value::Null;
    rb["wall_time_s"] = Value::Null;
    assert_eq!(ra, rb);
    assert_eq!(ra["format"], "alkspin-run/1");
    assert_eq!(ra["seeds"].as_array().unwrap().len(), 1);
}

#[test]
fn optimize_threshold_sets_exit_status() {
    let dir = TempDir::new().unwrap();
    let out = short_optimize(&dir.path().join("r"), &["--threshold", "0.9999999"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn optimize_reproduces_cat_state_preparation() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("fig");
    let out = alkspin(&[
        "optimize", "--config", "cs-baseline", "--target", "stretched-plus-cat", "--time", "150", "--seeds", "20",
        "--stop-at", "0.98", "--threshold", "0.98", "--out", path(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let record = read_json(&run.join("run.json"));
    assert!(record["final_fidelity"].as_f64().unwrap() >= 0.98);

    // The stored waveform replays to the recorded fidelity.
    let sim = dir.path().join("sim");
    let out = alkspin(&[
        "simulate", "--config", "cs-baseline", "--waveform", path(&run.join("waveform.csv")), "--target",
        "stretched-plus-cat", "--snapshots", "0,37.5,75,112.5,150", "--out", path(&sim),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let replay = read_json(&sim.join("run.json"));
    let (f0, f1) = (
        record["final_fidelity"].as_f64().unwrap(),
        replay["final_fidelity"].as_f64().unwrap(),
    );
    assert!((f0 - f1).abs() < 1e-8, "{f0} vs {f1}");
    let grids = fs::read_dir(&sim)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("wigner_"))
        .count();
    assert_eq!(grids, 5);
    assert_eq!(replay["snapshots"].as_array().unwrap().len(), 5);
}

#[test]
fn simulate_from_record() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("r");
    assert_eq!(code(&short_optimize(&run, &[])), 0);
    let sim = dir.path().join("s");
    let out = alkspin(&["simulate", "--record", path(&run.join("run.json")), "--out", path(&sim)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (a, b) = (read_json(&run.join("run.json")), read_json(&sim.join("run.json")));
    let diff = (a["final_fidelity"].as_f64().unwrap() - b["final_fidelity"].as_f64().unwrap()).abs();
    assert!(diff < 1e-8);
}

#[test]
fn simulate_rejects_slew_violations_unless_forced() {
    let dir = TempDir::new().unwrap();
    let run = dir.path().join("r");
    assert_eq!(code(&short_optimize(&run, &[])), 0);
    let text = fs::read_to_string(run.join("waveform.csv")).unwrap();
    // Push the first microwave amplitude knot far above its bound.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
    cells[5] = "10.0".into();
    lines[3] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();

    let args = |out: &Path, force: bool| {
        let mut a = vec![
            "simulate".to_string(),
            "--config".into(),
            "cs-baseline".into(),
            "--waveform".into(),
            path(&bad).into(),
            "--out".into(),
            path(out).into(),
        ];
        if force {
            a.push("--force".into());
        }
        a
    };
    let refuse = alkspin(&args(&dir.path().join("x"), false).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&refuse), 1);
    assert!(stderr(&refuse).contains("violation"));
    let forced = alkspin(&args(&dir.path().join("y"), true).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&forced), 0, "{}", stderr(&forced));
}

#[test]
fn simulate_rejects_zero_length_waveform() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "# alkspin-waveform v1\n# total_time_us = 0\ntime_us\n").unwrap();
    let out = alkspin(&[
        "simulate", "--config", "cs-baseline", "--waveform", path(&csv), "--out", path(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn wigner_export_of_fiducial_state() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("w.txt");
    let out = alkspin(&["wigner", "--target", "stretched", "--grid", "8x16", "--out", path(&file)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&file).unwrap();
    assert!(text.starts_with("# alkspin-wigner v1"));
    assert!(text.contains("# r_pp = 1e0"));
    let data_rows = text
        .lines()
        .filter(|l| l.starts_with(|c: char| c.is_ascii_digit()))
        .count();
    assert_eq!(data_rows, 8 * 16);
}

#[test]
fn benchmark_table_shape_and_reproducibility() {
    let dir = TempDir::new().unwrap();
    let variants = dir.path().join("variants.toml");
    fs::write(
        &variants,
        "schema = \"alkspin-variants/1\"\n\
         [[variant]]\nname = \"one-mw\"\npreset = \"cs-baseline\"\n\
         [[variant]]\nname = \"two-mw\"\npreset = \"cs-two-microwave\"\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = alkspin(&[
            "benchmark", "--config", path(&variants), "--time", "10,20", "--states", "2", "--seeds", "1",
            "--max-iterations", "3", "--out", path(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read_to_string(out_dir.join("benchmark.tsv")).unwrap()
    };
    let a = run("a");
    assert!(a.starts_with("# alkspin-benchmark v1"));
    let rows = a.lines().filter(|l| l.starts_with("one-mw") || l.starts_with("two-mw")).count();
    assert_eq!(rows, 2 * 2);
    assert_eq!(a, run("b"));
}

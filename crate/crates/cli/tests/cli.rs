use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn vspiker(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vspiker")).args(args).output().expect("spawn vspiker")
}

fn run_in(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let config = dir.join("run.toml");
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    vspiker(&args)
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap()
}

// Deterministic uniform draws for fixtures.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

// Inverter-like power curve in kW, five-minute records.
fn write_power_series(path: &Path, n: usize) {
    let mut s = String::from("timestamp,value\n");
    for i in 0..n {
        let phase = (i % 96) as f64 / 96.0 * std::f64::consts::PI;
        s.push_str(&format!("{},{:.3}\n", 1_600_000_000 + 300 * i, 150.0 * phase.sin()));
    }
    fs::write(path, s).unwrap();
}

const CONFIG_1: &str = r#"
seed = 1
out_dir = "out"
[data]
series = "series.csv"
train_fraction = 0.5
[encoder]
interval_length = 1.0
clamp = [-10.0, 170.0]
[network]
n_r = 1000
[network.lif]
threshold = -55.0
[stdp.forward]
a_minus = -0.1
a_plus = -0.1
[detector]
threshold = 0.0
"#;

const CONFIG_2: &str = r#"
seed = 1
out_dir = "out"
[data]
series = "series.csv"
train_fraction = 0.5
[encoder]
interval_length = 1.0
clamp = [-10.0, 170.0]
[network]
n_r = 1000
recurrent = true
[stdp.forward]
a_minus = 0.1
a_plus = 0.1
[stdp.recurrent]
a_minus = -0.1
a_plus = -0.1
"#;

fn case_study(config: &str, n: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    write_power_series(&dir.path().join("series.csv"), n);
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_configuration_1_is_inhibitory() {
    let dir = case_study(CONFIG_1, 400);
    assert_ok(&run_in(dir.path(), "train", &[]));
    assert!(dir.path().join("out/checkpoint.json").exists());
    let summary = read_json(dir.path().join("out/train_summary.json"));
    assert_eq!(summary["forward_behaviour"], "inhibitory");
    assert!(summary["recurrent_behaviour"].is_null());
    assert_eq!(summary["training_records"], 200);
    assert_eq!(summary["spikes_per_epoch"].as_array().unwrap().len(), 1);
}

#[test]
fn train_configuration_2_behaviours() {
    let dir = case_study(CONFIG_2, 300);
    assert_ok(&run_in(dir.path(), "train", &[]));
    let summary = read_json(dir.path().join("out/train_summary.json"));
    assert_eq!(summary["forward_behaviour"], "excitatory");
    assert_eq!(summary["recurrent_behaviour"], "inhibitory");
}

#[test]
fn missing_data_file_fails_without_checkpoint() {
    let dir = case_study(CONFIG_1, 10);
    fs::remove_file(dir.path().join("series.csv")).unwrap();
    let out = run_in(dir.path(), "train", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("out/checkpoint.json").exists());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = case_study(&CONFIG_1.replace("seed = 1", ""), 50);
    assert_eq!(run_in(dir.path(), "train", &[]).status.code(), Some(2));
    assert_ok(&run_in(dir.path(), "train", &["--seed", "4"]));

    let dir = case_study(&CONFIG_1.replace("n_r = 1000", "nr = 1000"), 50);
    assert_eq!(run_in(dir.path(), "train", &[]).status.code(), Some(2));
    assert_eq!(vspiker(&["train"]).status.code(), Some(2));
}

#[test]
fn detect_reports_2000_macs_for_configuration_1() {
    let dir = case_study(CONFIG_1, 400);
    assert_ok(&run_in(dir.path(), "train", &[]));
    let out = run_in(dir.path(), "detect", &[]);
    assert_ok(&out);
    let macs = read_json(dir.path().join("out/mac_report.json"));
    assert_eq!(macs["mean_macs_per_step"].as_f64(), Some(2000.0));
    assert_eq!(macs["total_macs"], 2000 * 200);
    let csv = fs::read_to_string(dir.path().join("out/detections.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("timestamp,raw_count,smoothed,alert"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn detect_threshold_below_all_counts_alerts_everywhere() {
    let dir = case_study(CONFIG_1, 200);
    assert_ok(&run_in(dir.path(), "train", &[]));
    let cfg = CONFIG_1.replace("threshold = 0.0", "threshold = -1.0");
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_ok(&run_in(dir.path(), "detect", &[]));
    let csv = fs::read_to_string(dir.path().join("out/detections.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn detect_on_empty_series_writes_header_only() {
    let dir = case_study(CONFIG_1, 200);
    assert_ok(&run_in(dir.path(), "train", &[]));
    fs::write(dir.path().join("series.csv"), "timestamp,value\n").unwrap();
    assert_ok(&run_in(dir.path(), "detect", &[]));
    let csv = fs::read_to_string(dir.path().join("out/detections.csv")).unwrap();
    assert_eq!(csv, "timestamp,raw_count,smoothed,alert\n");
}

#[test]
fn detect_rejects_other_checkpoint_versions() {
    let dir = case_study(CONFIG_1, 200);
    assert_ok(&run_in(dir.path(), "train", &[]));
    let path = dir.path().join("out/checkpoint.json");
    let mut cp = read_json(path.clone());
    cp["version"] = 2.into();
    fs::write(&path, cp.to_string()).unwrap();
    let out = run_in(dir.path(), "detect", &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

// Detection CSV plus a series CSV carrying the labels.
fn evaluation_fixture(counts: &[u32], labels: &[bool]) -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut det = String::from("timestamp,raw_count,smoothed,alert\n");
    let mut series = String::from("timestamp,value,label\n");
    for (i, (c, l)) in counts.iter().zip(labels).enumerate() {
        det.push_str(&format!("{i},{c},{c},0\n"));
        series.push_str(&format!("{i},0,{}\n", u8::from(*l)));
    }
    fs::write(dir.path().join("detections.csv"), det).unwrap();
    fs::write(dir.path().join("series.csv"), series).unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "out_dir = \"out\"\n[data]\nseries = \"series.csv\"\nlabel_column = \"label\"\n",
    )
    .unwrap();
    dir
}

fn evaluate(dir: &Path) -> (Output, Value) {
    let det = dir.join("detections.csv");
    let out = run_in(dir, "evaluate", &["--detections", det.to_str().unwrap()]);
    assert_ok(&out);
    (out, read_json(dir.join("out/metrics.json")))
}

#[test]
fn evaluate_perfect_detector() {
    let labels: Vec<bool> = (0..500).map(|i| (300..360).contains(&i)).collect();
    let counts: Vec<u32> = labels.iter().map(|&l| if l { 5 } else { 0 }).collect();
    let dir = evaluation_fixture(&counts, &labels);
    let (_, m) = evaluate(dir.path());
    assert_eq!(m["g_mean"]["value"], 1.0);
    assert_eq!(m["f1"]["value"], 1.0);
    assert_eq!(m["auc"]["value"], 1.0);
}

#[test]
fn evaluate_random_scores_give_chance_auc() {
    let mut rng = Lcg(42);
    let n = 10_000;
    let counts: Vec<u32> = (0..n).map(|_| (rng.next() * 10.0) as u32).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.next() < 0.3).collect();
    let dir = evaluation_fixture(&counts, &labels);
    let (_, m) = evaluate(dir.path());
    let auc = m["auc"]["value"].as_f64().unwrap();
    assert!((auc - 0.5).abs() <= 0.02, "AUC {auc}");
}

#[test]
fn evaluate_single_class_omits_auc() {
    let counts: Vec<u32> = (0..100).map(|i| i % 4).collect();
    let dir = evaluation_fixture(&counts, &[false; 100]);
    let (out, m) = evaluate(dir.path());
    assert!(m.get("auc").is_none());
    assert_eq!(m["g_mean"]["value"], 0.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn evaluate_with_label_windows_and_checkpoint() {
    let dir = case_study(CONFIG_1, 400);
    // one window inside the detection half
    let start = 1_600_000_000 + 300 * 250;
    let labels = format!("{{\"series.csv\": [[{start}, {}]]}}", start + 300 * 30);
    fs::write(dir.path().join("labels.json"), labels).unwrap();
    let cfg = CONFIG_1.replace(
        "train_fraction = 0.5",
        "train_fraction = 0.5\nlabels = \"labels.json\"\ndataset = \"series.csv\"",
    );
    fs::write(dir.path().join("run.toml"), cfg).unwrap();
    assert_ok(&run_in(dir.path(), "train", &[]));
    let out = run_in(dir.path(), "evaluate", &[]);
    assert_ok(&out);
    let m = read_json(dir.path().join("out/metrics.json"));
    assert!(m["auc"]["value"].is_f64());
    let summary = read_json(dir.path().join("out/train_summary.json"));
    assert_eq!(summary["dropped_anomalies"], 0);
}

const GRID: &str = r#"
seed = 5
out_dir = "out"
[data]
series = "series.csv"
label_column = "label"
[grid]
forward_a_minus = [-0.1, 0.1]
forward_a_plus = [-0.1]
recurrence = [false]
n_r = [20]
threshold = [-62.0]
leak = [0.009950166250831893]
interval_fraction = [0.1]
epochs = [1]
"#;

fn grid_fixture(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut s = String::from("timestamp,value,label\n");
    for i in 0..600 {
        let anomalous = (540..570).contains(&i);
        let v = (i as f64 * 0.25).sin() * if anomalous { 2.0 } else { 1.0 };
        s.push_str(&format!("{i},{v},{}\n", u8::from(anomalous)));
    }
    fs::write(dir.path().join("series.csv"), s).unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

#[test]
fn grid_search_two_configurations() {
    let dir = grid_fixture(GRID);
    assert_ok(&run_in(dir.path(), "grid-search", &["--workers", "2"]));
    let csv = fs::read_to_string(dir.path().join("out/grid_results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("rank,id,"));
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
}

#[test]
fn grid_search_output_independent_of_workers() {
    let config = GRID
        .replace("recurrence = [false]", "recurrence = [false, true]")
        .replace("epochs = [1]", "epochs = [1, 2]");
    let dir = grid_fixture(&config);
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        assert_ok(&run_in(dir.path(), "grid-search", &["--workers", workers]));
        outputs.push(fs::read(dir.path().join("out/grid_results.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 1 + 2 * 5 * 2);
}

fn energy(spec: &str) -> (Output, Value) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("arch.json");
    fs::write(&path, spec).unwrap();
    let out_dir = dir.path().join("out");
    let out = vspiker(&[
        "energy",
        "--spec",
        path.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    let report = if out.status.success() {
        read_json(out_dir.join("energy.json"))
    } else {
        Value::Null
    };
    (out, report)
}

#[test]
fn energy_reports() {
    let (out, r) = energy(r#"[{"type": "dense", "n_in": 32, "n_out": 64}]"#);
    assert_ok(&out);
    assert_eq!(r["total_macs"], 2048);
    let (_, r) = energy(r#"[{"type": "lstm", "seq_len": 10, "hidden": 8, "input": 4}]"#);
    assert_eq!(r["total_macs"], 4800);
    let (out, r) = energy(r#"[{"vacuum_spiker": {"n_r": 1000, "recurrent": false}}]"#);
    assert_eq!(r["total_macs"], 2000);
    assert!(String::from_utf8_lossy(&out.stdout).contains("2000"));
    let (out, _) = energy(r#"[{"type": "dense", "n_in": 32}]"#);
    assert_eq!(out.status.code(), Some(2));
}

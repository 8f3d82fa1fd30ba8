use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use exo_gate_cli::config::{RunConfig, SweepGrid};
use exo_gate_cli::output::SWEEP_COLUMNS;

fn exo_gate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exo-gate")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, config: &RunConfig) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn quiet_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::default();
    c.noise.amplitude_n = 0.0;
    c.noise.trials = 2;
    c.out_dir = out.to_path_buf();
    c
}

#[test]
fn verify_passes_and_catches_a_bent_reduced_element() {
    let ok = exo_gate(&["verify"]);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(ok.status.success(), "{text}");
    assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains("ratio J=0 / J=1 = -3")));
    assert!(!text.contains("FAIL"));

    let bent = exo_gate(&["verify", "--perturb-reduced", "1e-6"]);
    let text = String::from_utf8_lossy(&bent.stdout);
    assert_eq!(bent.status.code(), Some(1), "{text}");
    assert!(text.lines().any(|l| l.starts_with("FAIL") && l.contains("Wigner-Eckart")));
}

#[test]
fn verify_writes_a_report_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    assert!(exo_gate(&["verify", "--out", &out]).status.success());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn simulate_is_accurate_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = quiet_config(&dir.path().join("run"));
    let path = write_config(dir.path(), &config);
    let first = exo_gate(&["simulate", "--config", &path, "--sigma-t", "1000"]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let json_path = dir.path().join("run/simulate.json");
    let a = fs::read(&json_path).unwrap();
    assert!(exo_gate(&["simulate", "--config", &path, "--sigma-t", "1000"]).status.success());
    assert_eq!(a, fs::read(&json_path).unwrap(), "reruns must be byte-identical");

    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    for f in report["report"]["noiseless"].as_array().unwrap() {
        assert!(f["d"].as_f64().unwrap() <= 1e-4, "{f}");
    }
    let blocks = report["report"]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[0]["entries"].as_array().unwrap().len(), 4);
    let echoed: RunConfig = serde_json::from_value(report["metadata"]["config"].clone()).unwrap();
    assert_eq!(echoed, RunConfig { sigma_t: 1000.0, ..config });

    let noise = &report["report"]["noise"];
    for j in ["d_j0", "d_j1"] {
        assert_eq!(noise[j]["std"].as_f64().unwrap(), 0.0);
    }
    let d1 = report["report"]["noiseless"][1]["d"].as_f64().unwrap();
    assert_eq!(noise["d_j1"]["mean"].as_f64().unwrap(), d1, "N = 0 must reproduce the noiseless gate");
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<csv::StringRecord>) {
    let text = fs::read_to_string(path).unwrap();
    let comments: Vec<String> = text.lines().take_while(|l| l.starts_with('#')).map(String::from).collect();
    let body: String = text.lines().skip(comments.len()).map(|l| format!("{l}\n")).collect();
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), SWEEP_COLUMNS);
    (comments, reader.records().map(Result::unwrap).collect())
}

#[test]
fn noiseless_sweep_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = quiet_config(&dir.path().join("run"));
    config.sweep = SweepGrid { values: Some(vec![30.0, 60.0, 120.0]), ..SweepGrid::default() };
    let path = write_config(dir.path(), &config);
    let run = exo_gate(&["sweep", "--config", &path, "--mode", "weighted"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let (comments, rows) = read_rows(&dir.path().join("run/sweep.csv"));
    assert!(comments[0].contains("schema 1"));
    assert!(comments.iter().any(|c| c.starts_with("# version ")));
    assert_eq!(rows.len(), 3);
    let col = |name: &str| SWEEP_COLUMNS.iter().position(|c| *c == name).unwrap();
    let num = |r: &csv::StringRecord, name: &str| r[col(name)].parse::<f64>().unwrap();
    for r in &rows {
        assert_eq!(num(r, "noisy_d_j0_mean"), num(r, "d_j0"));
        assert_eq!(num(r, "noisy_d_j1_mean"), num(r, "d_j1"));
        assert_eq!(&r[col("error")], "");
    }
    for w in rows.windows(2) {
        assert!(num(&w[1], "leakage_j1") < num(&w[0], "leakage_j1"));
        assert!(num(&w[1], "amplitude") < num(&w[0], "amplitude"));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/sweep.json")).unwrap()).unwrap();
    assert_eq!(summary["points"].as_array().unwrap().len(), 3);
    assert_eq!(summary["metadata"]["config"]["mode"], "weighted_3to1");
}

#[test]
fn noisy_sweep_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig { out_dir: dir.path().join("a"), ..RunConfig::default() };
    config.sweep = SweepGrid { values: Some(vec![40.0]), ..SweepGrid::default() };
    let path = write_config(dir.path(), &config);
    let run = |out: &str, seed: &str| {
        let o = exo_gate(&["sweep", "--config", &path, "--trials", "3", "--seed", seed, "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(Path::new(out).join("sweep.csv")).unwrap()
    };
    let a = dir.path().join("a").to_string_lossy().into_owned();
    let first = run(&a, "7");
    assert_eq!(first, run(&a, "7"));
    assert_ne!(first, run(&a, "8"));
}

#[test]
fn bad_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"window": 1.0}"#).unwrap();
    let o = exo_gate(&["sweep", "--config", &path.to_string_lossy()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window"));
    let o = exo_gate(&["simulate", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

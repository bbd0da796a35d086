use std::path::Path;
use std::process::{Command, Output};

use sescc::config::RunConfig;
use sescc::model::CompositeSpec;

fn sescc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sescc")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_grid_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = RunConfig::three_site();
    cfg.grid.start = -3.0;
    cfg.grid.stop = 3.0;
    cfg.grid.step = 0.05;
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn solve_writes_artifacts_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = sescc(&["solve", "--seed-paper", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("energy"));
    for f in ["t_amplitudes.json", "lambda_amplitudes.json", "s_amplitudes.json", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let t: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t_amplitudes.json")).unwrap()).unwrap();
    assert_eq!(t["provenance"]["format_version"], 1);
    assert_eq!(t["data"]["entries"].as_array().unwrap().len(), 8);
}

#[test]
fn flow_trace_is_line_delimited() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_grid_config(dir.path());
    let out = sescc(&["flow", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("flow_trace.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines[0].get("provenance").is_some());
    assert!(lines.len() > 2);
    assert!(dir.path().join("heff_emb.json").exists());
}

#[test]
fn spectral_and_sweep_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_grid_config(dir.path());
    let (c, o) = (cfg.to_str().unwrap(), dir.path().to_str().unwrap());
    assert_eq!(code(&sescc(&["spectral", "--config", c, "--out", o, "--eta", "0.1"])), 0);
    let csv = std::fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("omega,"));
    assert_eq!(rows.len(), 1 + 121);
    assert!(dir.path().join("poles.json").exists());

    assert_eq!(code(&sescc(&["spectral", "--config", c, "--out", o, "--format", "json"])), 0);
    assert!(dir.path().join("spectral.json").exists());
    assert_eq!(code(&sescc(&["sweep", "--config", c, "--out", o])), 0);
    assert!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap().contains("double_occupancy"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "reference = \"100110\"\n[model]\nkind = \"siam\"\n").unwrap();
    assert_eq!(code(&sescc(&["solve", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&sescc(&["solve"])), 2);
    assert_eq!(code(&sescc(&["solve", "--seed-paper", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&sescc(&["spectral", "--seed-paper", "--eta", "0"])), 2);
    assert_eq!(code(&sescc(&["solve", "--seed-paper", "--format", "xml"])), 2);
}

#[test]
fn nonconvergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::three_site();
    cfg.solver.max_iter = 1;
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let out = sescc(&["solve", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3);
}

#[test]
fn configurations_round_trip_through_toml() {
    let mut composite = RunConfig::three_site();
    composite.model = sescc::config::ModelConfig::Composite(CompositeSpec::nsl(0.2));
    composite.reference = Some("1001100110".into());
    composite.electrons = Some(5);
    for cfg in [RunConfig::three_site(), composite] {
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use occusafe::scenario::fixtures::{corridor_map, PathBuilder};
use occusafe::scenario::ScenarioConfig;

fn occusafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occusafe")).args(args).output().unwrap()
}

fn write_corridor(dir: &Path) -> String {
    fs::write(dir.join("c.map"), corridor_map(16.0, 6.0, 0.5).to_text()).unwrap();
    let path = PathBuilder::new(1.5, 3.0, 0.0).straight(10.0).build(0.1).unwrap();
    fs::write(dir.join("c.path"), path.to_text()).unwrap();
    let mut config = ScenarioConfig::new("c.map", "c.path");
    config.horizon = 1.0;
    config.max_pedestrian_speed = 0.5;
    config.tick_limit = 200;
    let file = dir.join("c.toml");
    fs::write(&file, config.to_toml()).unwrap();
    file.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_outputs_and_replay_passes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_corridor(dir.path());
    let out_dir = dir.path().join("out");
    let out = occusafe(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["outcome"], "goal_reached");
    assert_eq!(report["severity"], "safe");
    for name in ["run.jsonl", "ticks.csv", "report.json"] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
    let log = out_dir.join("run.jsonl");
    let check = occusafe(&["check", "--replay", log.to_str().unwrap()]);
    assert!(check.status.success(), "{}", String::from_utf8_lossy(&check.stdout));
    assert!(String::from_utf8_lossy(&check.stdout).contains("0 violations"));
}

#[test]
fn check_rejects_a_tampered_log() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_corridor(dir.path());
    let out_dir = dir.path().join("out");
    assert!(occusafe(&["run", "--scenario", &scenario, "--out", out_dir.to_str().unwrap()]).status.success());
    let log = out_dir.join("run.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut tick: serde_json::Value = serde_json::from_str(&lines[4]).unwrap();
    let accel = tick["input"]["accel"].as_f64().unwrap();
    tick["input"]["accel"] = serde_json::json!(accel + 1.0);
    lines[4] = tick.to_string();
    fs::write(&log, lines.join("\n") + "\n").unwrap();
    let check = occusafe(&["check", "--replay", log.to_str().unwrap()]);
    assert!(!check.status.success());
}

#[test]
fn sweep_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_corridor(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = occusafe(&[
        "sweep",
        "--scenario",
        &scenario,
        "--vped",
        "0.5,1.0",
        "--horizon",
        "1.0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("v=0.5 m/s") && table.contains("T=1 s"));
    assert_eq!(fs::read_to_string(out_dir.join("sweep.txt")).unwrap(), table);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(json["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn fixtures_load_as_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    assert!(occusafe(&["fixtures", "--out", dir.path().to_str().unwrap()]).status.success());
    let scenario = occusafe::scenario::Scenario::load(&dir.path().join("garage.toml")).unwrap();
    assert_eq!(scenario.horizon_steps(), 15);
}

#[test]
fn missing_scenario_fails() {
    let out = occusafe(&["run", "--scenario", "/nonexistent/scenario.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent"));
}

use std::path::PathBuf;

use occusafe::grid::StaticCell;
use occusafe::scenario::fixtures::{corridor_map, garage_config, garage_map, garage_path, PathBuilder};
use occusafe::scenario::{
    read_log, replay_check, run_scenario, write_csv, write_log, Leg, Outcome, PedestrianSpec, ReplaySettings,
    Scenario, ScenarioConfig, SeverityClass,
};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corridor(horizon: f64, speed: f64) -> Scenario {
    let map = corridor_map(20.0, 6.0, 0.5);
    let path = PathBuilder::new(1.5, 3.0, 0.0).straight(15.0).build(0.1).unwrap();
    let mut config = ScenarioConfig::new("corridor.map", "corridor.path");
    config.horizon = horizon;
    config.max_pedestrian_speed = speed;
    config.tick_limit = 300;
    Scenario::new(config, map, path).unwrap()
}

#[test]
fn checked_in_fixtures_match_generators() {
    let dir = fixture_dir();
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    assert_eq!(read("garage.map"), garage_map().to_text());
    assert_eq!(read("garage.path"), garage_path(0.1).to_text());
    assert_eq!(ScenarioConfig::from_toml(&read("garage.toml")).unwrap(), garage_config());
    let loaded = Scenario::load(&dir.join("garage.toml")).unwrap();
    assert_eq!(loaded.map, garage_map());
}

#[test]
fn empty_corridor_reaches_goal_safely() {
    let out = run_scenario(&corridor(1.0, 0.5)).unwrap();
    assert_eq!(out.report.outcome, Outcome::GoalReached);
    assert_eq!(out.report.severity, SeverityClass::Safe);
    assert!(out.report.final_state.v < 0.05);
    let goal = out.records.last().unwrap();
    assert!(goal.state.x > 15.0);
}

#[test]
fn zero_tick_limit_is_a_vacuous_safe_run() {
    let mut s = corridor(1.0, 0.5);
    s.config.tick_limit = 0;
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.report.ticks, 0);
    assert_eq!(out.report.severity, SeverityClass::Safe);
    assert_eq!(out.report.outcome, Outcome::TickLimit);
}

#[test]
fn log_roundtrip_and_replay_is_clean() {
    let mut s = corridor(1.5, 1.0);
    s.map.fill(20..24, 1..4, StaticCell::ParkedVehicle);
    s.config.pedestrians.push(PedestrianSpec {
        x: 12.0,
        y: 5.0,
        footprint: 1.0,
        tracked: false,
        legs: vec![Leg {
            vx: 0.0,
            vy: -0.8,
            duration: 3.0,
        }],
    });
    let out = run_scenario(&s).unwrap();
    let mut buf = Vec::new();
    write_log(&mut buf, &out.header, &out.records).unwrap();
    let (header, records) = read_log(buf.as_slice()).unwrap();
    assert_eq!(header, out.header);
    assert_eq!(records, out.records);
    let report = replay_check(&header, &records, &ReplaySettings::default()).unwrap();
    assert!(report.is_clean(), "{:?}", report.violations);
    assert_eq!(report.ticks, out.records.len());
    assert!(report.accepted > 0);
}

#[test]
fn tampered_log_is_caught() {
    let out = run_scenario(&corridor(1.0, 0.5)).unwrap();
    let mut records = out.records.clone();
    records[5].input.accel += 0.5;
    let report = replay_check(&out.header, &records, &ReplaySettings::default()).unwrap();
    assert!(!report.is_clean());
}

#[test]
fn csv_has_one_row_per_tick() {
    let out = run_scenario(&corridor(1.0, 0.5)).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &out.records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tick,x,y,psi,v,delta,a,verdict,overlap,status"));
    assert_eq!(lines.count(), out.records.len());
}

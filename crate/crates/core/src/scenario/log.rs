//! Run logs (JSON lines), per-tick CSV and the offline replay check.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::constraints::{check_box_within, BoxLimits};
use crate::dynamics::{step, VehicleParams};
use crate::grid::GridMap;
use crate::nmpc::NmpcStatus;
use crate::observer::{check_trajectory, CheckMode, FallbackStore, Verdict};
use crate::reachability::{CellClass, DrivableMap};
use crate::trajectory::Trajectory;

use super::run::TickRecord;
use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    /// Static map in its text format.
    pub map: String,
    pub horizon_steps: usize,
    pub observer_mode: CheckMode,
    pub vehicle: VehicleParams,
    pub limits: BoxLimits,
    pub initial_fallback: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogLine {
    Header(LogHeader),
    Tick(Box<TickRecord>),
}

/// Ascending flat indices as `[start, count]` runs.
pub(super) fn encode_runs(cells: &[usize]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &c in cells {
        match runs.last_mut() {
            Some(r) if r[0] + r[1] == c => r[1] += 1,
            _ => runs.push([c, 1]),
        }
    }
    runs
}

fn decode_runs(runs: &[[usize; 2]]) -> impl Iterator<Item = usize> + '_ {
    runs.iter().flat_map(|&[start, count]| start..start + count)
}

/// Header line followed by one line per tick.
pub fn write_log(mut out: impl Write, header: &LogHeader, records: &[TickRecord]) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &LogLine::Header(header.clone()))?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, &LogLine::Tick(Box::new(r.clone())))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_log(input: impl BufRead) -> Result<(LogHeader, Vec<TickRecord>), ScenarioError> {
    let mut header = None;
    let mut records = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ScenarioError::Log {
            line: k + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| ScenarioError::Log {
            line: k + 1,
            message: e.to_string(),
        })?;
        match (parsed, header.is_some()) {
            (LogLine::Header(h), false) if records.is_empty() => header = Some(h),
            (LogLine::Tick(t), true) => records.push(*t),
            _ => {
                return Err(ScenarioError::Log {
                    line: k + 1,
                    message: "expected one header line before the ticks".into(),
                })
            }
        }
    }
    let header = header.ok_or(ScenarioError::Log {
        line: 0,
        message: "log is empty".into(),
    })?;
    Ok((header, records))
}

fn verdict_text(v: Option<Verdict>) -> String {
    match v {
        Some(Verdict::Accepted) => "accepted".into(),
        Some(Verdict::Rejected(k)) => format!("rejected:{k}"),
        None => "none".into(),
    }
}

fn status_text(s: Option<NmpcStatus>) -> &'static str {
    match s {
        Some(NmpcStatus::Solved) => "solved",
        Some(NmpcStatus::Infeasible) => "infeasible",
        Some(NmpcStatus::IterationLimit) => "iteration_limit",
        None => "error",
    }
}

/// `tick,x,y,psi,v,delta,a,verdict,overlap,status`
pub fn write_csv(out: impl Write, records: &[TickRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tick", "x", "y", "psi", "v", "delta", "a", "verdict", "overlap", "status"])?;
    for r in records {
        w.write_record([
            r.tick.to_string(),
            r.state.x.to_string(),
            r.state.y.to_string(),
            r.state.psi.to_string(),
            r.state.v.to_string(),
            r.input.steering.to_string(),
            r.input.accel.to_string(),
            verdict_text(r.verdict),
            r.overlap.to_string(),
            status_text(r.status).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySettings {
    /// Allowed violation of half-space and box constraints.
    pub tolerance: f64,
    /// Largest terminal speed of an accepted plan.
    pub terminal_speed: f64,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            terminal_speed: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub ticks: usize,
    pub accepted: usize,
    /// Accepted stages whose CoG cell was a potential pedestrian cell.
    pub cog_conflicts: usize,
    /// Accepted plans not ending at rest.
    pub terminal_failures: usize,
    /// Accepted stages breaking a half-space or box constraint.
    pub constraint_failures: usize,
    /// Largest half-space violation over accepted stages.
    pub max_halfspace_violation: f64,
    pub violations: Vec<String>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn tick_map(base: &DrivableMap, runs: &[[usize; 2]]) -> DrivableMap {
    let mut dmap = base.clone();
    for flat in decode_runs(runs) {
        let i = dmap.frame().unflat(flat);
        dmap.mark_pedestrian(i);
    }
    dmap
}

/// Re-verify the observer and controller invariants from a log alone:
/// accepted plans are conflict-free on their tick's map, end at rest and
/// satisfy their constraints; every actuated command comes from the
/// fallback store fed with the logged verdicts; states follow the plant.
pub fn replay_check(header: &LogHeader, records: &[TickRecord], settings: &ReplaySettings) -> Result<ReplayReport, ScenarioError> {
    let map = GridMap::parse(&header.map)?;
    let base = DrivableMap::from_static(&map);
    let params = &header.vehicle;
    let mut report = ReplayReport {
        ticks: records.len(),
        ..ReplayReport::default()
    };
    let mut store = FallbackStore::new(header.initial_fallback.clone());

    for (k, r) in records.iter().enumerate() {
        let mut msgs: Vec<String> = Vec::new();
        let mut fail = |msg: String| msgs.push(msg);
        if r.tick != k {
            fail(format!("expected tick index {k}"));
        }
        if r.verdict.is_some() != r.candidate.is_some() {
            fail("verdict and candidate disagree".into());
        }
        let dmap = tick_map(&base, &r.pedestrian_cells);
        if let (Some(Verdict::Accepted), Some(plan)) = (r.verdict, &r.candidate) {
            report.accepted += 1;
            if plan.horizon() != header.horizon_steps {
                fail(format!("accepted plan has {} stages", plan.horizon()));
            }
            if check_trajectory(plan, &dmap, header.observer_mode, params) != Verdict::Accepted {
                fail("accepted plan conflicts with its map".into());
            }
            let conflicts = plan
                .stages
                .iter()
                .filter(|s| dmap.class_at(s.state.position()) == Some(CellClass::PotentialPedestrian))
                .count();
            if conflicts > 0 {
                report.cog_conflicts += conflicts;
                fail(format!("{conflicts} CoG stages on potential pedestrian cells"));
            }
            let last = plan.terminal();
            if !(last.state.v.abs() <= settings.terminal_speed && last.input.steering == 0.0 && last.input.accel == 0.0) {
                report.terminal_failures += 1;
                fail("accepted plan does not end at rest".into());
            }
            if r.constraints.len() != plan.horizon() {
                fail("constraint count does not match the horizon".into());
            }
            for (j, sc) in r.constraints.iter().enumerate() {
                let Some(stage) = plan.stages.get(j + 1) else { break };
                let v = sc.max_violation(stage.state.position());
                report.max_halfspace_violation = report.max_halfspace_violation.max(v);
                if v > settings.tolerance {
                    report.constraint_failures += 1;
                    fail(format!("stage {} violates a half-space by {v:e}", j + 1));
                }
            }
            for (j, pair) in plan.stages.windows(2).enumerate() {
                if !check_box_within(&pair[0], &pair[1], &header.limits, settings.tolerance) {
                    report.constraint_failures += 1;
                    fail(format!("stage {j} breaks a box limit"));
                }
            }
        }
        let expected = store.command(r.verdict, r.candidate.clone());
        if expected != (r.input, r.source) {
            fail(format!("actuated {:?} but the store holds {:?}", (r.input, r.source), expected));
        }
        if let Some(next) = records.get(k + 1) {
            match step(&r.state, &r.input, params) {
                Ok(s) if s == next.state => {}
                _ => fail("next state does not follow the plant".into()),
            }
        }
        report
            .violations
            .extend(msgs.into_iter().map(|m| format!("tick {}: {m}", r.tick)));
    }
    Ok(report)
}

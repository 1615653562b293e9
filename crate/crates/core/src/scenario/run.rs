use serde::{Deserialize, Serialize};

use crate::advisor::{advise, AdvisorRequest};
use crate::constraints::{build_stage_constraints, cap_front, StageConstraints};
use crate::dynamics::{step, ControlInput, VehicleState};
use crate::footprint::overlap_fraction;
use crate::fov::compute_fov;
use crate::grid::WorldPoint;
use crate::nmpc::{solve_nmpc, NmpcProblem, NmpcStatus};
use crate::observer::{check_trajectory, initial_fallback, CommandSource, FallbackStore, Verdict};
use crate::reachability::{drivable_map, DrivableMap, ExtrapolationRequest, PedestrianTrack};
use crate::reference::{align_headings, horizon_reference, nearest_index_from, SpeedProfile};
use crate::trajectory::Trajectory;

use super::config::{PedestrianAgent, Scenario};
use super::log::{encode_runs, LogHeader};
use super::{classify_severity, ScenarioError, SeverityClass};

/// Everything that happened in one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    /// State at the start of the tick.
    pub state: VehicleState,
    pub reference_index: usize,
    /// `None` when the solver produced no candidate.
    pub verdict: Option<Verdict>,
    pub status: Option<NmpcStatus>,
    pub solver_error: Option<String>,
    pub qp_iterations: usize,
    pub source: CommandSource,
    pub input: ControlInput,
    /// Free distances to the front, left, rear and right.
    pub free: [f64; 4],
    pub overlap: f64,
    pub candidate: Option<Trajectory>,
    pub constraints: Vec<StageConstraints>,
    /// Potential pedestrian cells as `[first flat index, count]` runs.
    pub pedestrian_cells: Vec<[usize; 2]>,
    pub pedestrians: Vec<WorldPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoalReached,
    TickLimit,
    /// A sensor left the map.
    LeftMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub horizon: f64,
    pub horizon_steps: usize,
    pub max_pedestrian_speed: f64,
    pub ticks: usize,
    pub outcome: Outcome,
    pub accepted: usize,
    pub rejected: usize,
    pub no_candidate: usize,
    pub max_overlap: f64,
    pub severity: SeverityClass,
    pub final_state: VehicleState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub header: LogHeader,
    pub records: Vec<TickRecord>,
    pub report: RunReport,
}

fn monitor_map(
    scenario: &Scenario,
    state: &VehicleState,
    tracks: &[PedestrianTrack],
) -> Result<Option<DrivableMap>, ScenarioError> {
    let c = &scenario.config;
    let Ok(fov) = compute_fov(&scenario.map, state, &c.vehicle) else {
        return Ok(None);
    };
    let visible: Vec<PedestrianTrack> = tracks
        .iter()
        .filter(|t| {
            scenario
                .map
                .world_to_cell(t.position)
                .is_ok_and(|i| fov.is_visible(i))
        })
        .copied()
        .collect();
    let req = ExtrapolationRequest {
        horizon: c.horizon,
        max_pedestrian_speed: c.max_pedestrian_speed,
        vehicle_speed: state.v.max(0.0),
    };
    Ok(Some(drivable_map(&scenario.map, &fov, &visible, &req)?))
}

fn at_goal(scenario: &Scenario, state: &VehicleState) -> bool {
    let goal = scenario.path.last().position();
    goal.distance(state.position()) < scenario.path.spacing() && state.v < 0.05
}

/// Run the closed loop until the goal, the tick limit or the map edge.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let c = &scenario.config;
    let params = &c.vehicle;
    let n = scenario.horizon_steps();
    let profile = SpeedProfile {
        a_lat: SpeedProfile::default().a_lat,
        v_max: c.limits.v_max,
    };
    let corridor = c.corridor();
    let sqp = c.sqp();
    let mut agents: Vec<PedestrianAgent> = c.pedestrians.iter().cloned().map(PedestrianAgent::new).collect();

    let mut state = scenario.start_state();
    let tracks: Vec<PedestrianTrack> = agents.iter().map(PedestrianAgent::track).collect();
    let start_map = monitor_map(scenario, &state, &tracks)?
        .ok_or_else(|| ScenarioError::Invalid("vehicle sensors start outside the map".into()))?;
    let initial = initial_fallback(state, n, c.limits.a_min, &start_map, c.observer_mode, params);
    let header = LogHeader {
        map: scenario.map.to_text(),
        horizon_steps: n,
        observer_mode: c.observer_mode,
        vehicle: *params,
        limits: c.limits,
        initial_fallback: initial.clone(),
    };
    let mut store = FallbackStore::new(initial);

    let mut records = Vec::new();
    let mut outcome = Outcome::TickLimit;
    let mut ref_index = 0;
    let mut max_overlap: f64 = 0.0;
    let (mut accepted, mut rejected, mut no_candidate) = (0, 0, 0);

    for tick in 0..c.tick_limit {
        if at_goal(scenario, &state) {
            outcome = Outcome::GoalReached;
            break;
        }
        let tracks: Vec<PedestrianTrack> = agents.iter().map(PedestrianAgent::track).collect();
        let Some(dmap) = monitor_map(scenario, &state, &tracks)? else {
            outcome = Outcome::LeftMap;
            break;
        };
        let free = advise(&dmap, &state, &AdvisorRequest::cardinal(c.buffer))
            .expect("cardinal request is valid")
            .entries
            .iter()
            .map(|b| b.distance)
            .collect::<Vec<_>>();

        ref_index = nearest_index_from(&scenario.path, state.position(), ref_index);
        let mut refs = horizon_reference(&scenario.path, ref_index, params.ts, n, &profile);
        align_headings(&mut refs, state.psi);
        let incumbent = store.trajectory().shifted(store.index(), state, n);
        let mut constraints = build_stage_constraints(&dmap, &incumbent, &refs, &corridor)?;
        if refs[n].index + 1 == scenario.path.len() {
            // the final waypoint is a stop line
            cap_front(&mut constraints, scenario.path.last().position());
        }
        let problem = NmpcProblem {
            xi0: state,
            refs: &refs,
            stages: &constraints,
            limits: &c.limits,
            weights: &c.weights,
            params,
        };
        let (candidate, status, solver_error, qp_iterations) = match solve_nmpc(&problem, &incumbent, &sqp) {
            Ok(sol) => {
                let iters = sol.iterates.iter().map(|it| it.qp_iterations).sum();
                (sol.trajectory, Some(sol.status), None, iters)
            }
            Err(e) => (None, None, Some(e.to_string()), 0),
        };

        // the observer rebuilds its own map rather than reusing the monitor's
        let observer_map = monitor_map(scenario, &state, &tracks)?.expect("same inputs as the monitor");
        let verdict = candidate
            .as_ref()
            .map(|t| check_trajectory(t, &observer_map, c.observer_mode, params));
        match verdict {
            Some(Verdict::Accepted) => accepted += 1,
            Some(Verdict::Rejected(_)) => rejected += 1,
            None => no_candidate += 1,
        }
        let logged_candidate = candidate.clone();
        let (input, source) = store.command(verdict, candidate);

        let overlap = overlap_fraction(&state, params, &dmap);
        max_overlap = max_overlap.max(overlap);

        records.push(TickRecord {
            tick,
            state,
            reference_index: ref_index,
            verdict,
            status,
            solver_error,
            qp_iterations,
            source,
            input,
            free: [free[0], free[1], free[2], free[3]],
            overlap,
            candidate: logged_candidate,
            constraints,
            pedestrian_cells: encode_runs(&dmap.pedestrian_cells()),
            pedestrians: agents.iter().map(|a| a.position).collect(),
        });

        state = step(&state, &input, params)?;
        for a in &mut agents {
            a.advance(params.ts);
        }
    }
    if outcome == Outcome::TickLimit && at_goal(scenario, &state) {
        outcome = Outcome::GoalReached;
    }

    let report = RunReport {
        horizon: c.horizon,
        horizon_steps: n,
        max_pedestrian_speed: c.max_pedestrian_speed,
        ticks: records.len(),
        outcome,
        accepted,
        rejected,
        no_candidate,
        max_overlap,
        severity: classify_severity(max_overlap),
        final_state: state,
    };
    Ok(RunOutput { header, records, report })
}

//! Independent collision check of candidate plans and the fallback store
//! that keeps the vehicle on the latest accepted plan.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, VehicleParams, VehicleState};
use crate::footprint::covered_cells;
use crate::reachability::{CellClass, DrivableMap};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    /// Only the CoG cell of each stage must be safe.
    #[default]
    CogPoint,
    /// Every cell under the body rectangle must be safe.
    Footprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    /// First offending stage.
    Rejected(usize),
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

fn stage_is_safe(state: &VehicleState, dmap: &DrivableMap, mode: CheckMode, params: &VehicleParams) -> bool {
    match mode {
        CheckMode::CogPoint => dmap.class_at(state.position()) == Some(CellClass::SafeDrivable),
        CheckMode::Footprint => {
            let (cells, outside) = covered_cells(state, params, dmap.frame());
            !outside && cells.iter().all(|&i| dmap.is_safe(i))
        }
    }
}

/// Superimpose the plan on `dmap`; leaving the map counts as a conflict.
pub fn check_trajectory(
    trajectory: &Trajectory,
    dmap: &DrivableMap,
    mode: CheckMode,
    params: &VehicleParams,
) -> Verdict {
    trajectory
        .stages
        .iter()
        .position(|s| !stage_is_safe(&s.state, dmap, mode, params))
        .map_or(Verdict::Accepted, Verdict::Rejected)
}

/// Where an actuated command came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "stage")]
pub enum CommandSource {
    /// Stage 0 of the candidate accepted this tick.
    Candidate,
    /// A stage of the stored plan.
    Fallback(usize),
}

/// Latest accepted plan and the next stage to execute from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackStore {
    trajectory: Trajectory,
    index: usize,
}

impl FallbackStore {
    /// Store `initial` with nothing consumed yet.
    pub fn new(initial: Trajectory) -> Self {
        Self {
            trajectory: initial,
            index: 0,
        }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Command for this tick. An accepted candidate replaces the store;
    /// otherwise the stored plan advances by one stage and holds its
    /// terminal rest command once exhausted.
    pub fn command(&mut self, verdict: Option<Verdict>, candidate: Option<Trajectory>) -> (ControlInput, CommandSource) {
        if let (Some(Verdict::Accepted), Some(plan)) = (verdict, candidate) {
            let input = plan.stages[0].input;
            self.trajectory = plan;
            self.index = 1;
            return (input, CommandSource::Candidate);
        }
        let n = self.trajectory.horizon();
        let stage = self.index.min(n);
        let input = if stage == n {
            ControlInput::ZERO
        } else {
            self.trajectory.stages[stage].input
        };
        self.index = (stage + 1).min(n);
        (input, CommandSource::Fallback(stage))
    }
}

/// The braking plan when it passes the check, else the hardest braking.
pub fn initial_fallback(
    start: VehicleState,
    stages: usize,
    a_min: f64,
    dmap: &DrivableMap,
    mode: CheckMode,
    params: &VehicleParams,
) -> Trajectory {
    let gentle = Trajectory::braking(start, stages, a_min, params);
    if check_trajectory(&gentle, dmap, mode, params).is_accepted() {
        return gentle;
    }
    let hard_steps = (start.v.max(0.0) / (-a_min * params.ts)).ceil() as usize;
    let hard = Trajectory::braking(start, hard_steps.min(stages), a_min, params);
    let mut stages_out = hard.stages;
    let rest = *stages_out.last().expect("braking plan has stages");
    stages_out.resize(stages + 1, rest);
    Trajectory { stages: stages_out }
}

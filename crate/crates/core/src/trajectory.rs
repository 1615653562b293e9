//! Planned state and input sequences over the prediction horizon.

use serde::{Deserialize, Serialize};

use crate::dynamics::{step, ControlInput, DynamicsError, VehicleParams, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stage {
    pub state: VehicleState,
    /// Input applied from this stage to the next; zero at the last stage.
    pub input: ControlInput,
}

/// `N + 1` stages; the last one carries no input.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub stages: Vec<Stage>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.stages.len().saturating_sub(1)
    }

    pub fn terminal(&self) -> &Stage {
        self.stages.last().expect("trajectory has at least one stage")
    }

    /// Forward simulation of `inputs` from `start`.
    pub fn rollout(
        start: VehicleState,
        inputs: &[ControlInput],
        params: &VehicleParams,
    ) -> Result<Self, DynamicsError> {
        let mut stages = Vec::with_capacity(inputs.len() + 1);
        let mut state = start;
        for &input in inputs {
            stages.push(Stage { state, input });
            state = step(&state, &input, params)?;
        }
        stages.push(Stage {
            state,
            input: ControlInput::ZERO,
        });
        Ok(Self { stages })
    }

    /// Straight constant-deceleration plan that comes to rest after
    /// `stages` steps, or as soon as `a_min` allows.
    pub fn braking(start: VehicleState, stages: usize, a_min: f64, params: &VehicleParams) -> Self {
        let v0 = start.v.max(0.0);
        let accel = if stages == 0 {
            0.0
        } else {
            a_min.max(-v0 / (stages as f64 * params.ts))
        };
        let mut out = Vec::with_capacity(stages + 1);
        let mut state = VehicleState { v: v0, ..start };
        for _ in 0..stages {
            // never reverse: the last braking step only removes what is left
            let a = accel.max(-state.v / params.ts);
            let input = ControlInput::new(0.0, a);
            out.push(Stage { state, input });
            state = step(&state, &input, params).expect("zero steering is in domain");
            state.v = state.v.max(0.0);
        }
        out.push(Stage {
            state,
            input: ControlInput::ZERO,
        });
        Self { stages: out }
    }

    /// The plan from stage `offset` on, re-anchored at `start` and padded
    /// with rest stages to `stages + 1` entries.
    pub fn shifted(&self, offset: usize, start: VehicleState, stages: usize) -> Self {
        let tail: Vec<Stage> = self.stages.iter().skip(offset).copied().collect();
        let rest = Stage {
            state: VehicleState {
                v: 0.0,
                ..self.terminal().state
            },
            input: ControlInput::ZERO,
        };
        let mut out: Vec<Stage> = tail.into_iter().take(stages + 1).collect();
        while out.len() < stages + 1 {
            out.push(rest);
        }
        if let Some(last) = out.last_mut() {
            last.input = ControlInput::ZERO;
        }
        out[0].state = start;
        Self { stages: out }
    }

    /// Largest `|next - step(stage)|` component over the horizon.
    pub fn dynamics_defect(&self, params: &VehicleParams) -> Result<f64, DynamicsError> {
        let mut worst: f64 = 0.0;
        for pair in self.stages.windows(2) {
            let predicted = step(&pair[0].state, &pair[0].input, params)?.to_vector();
            worst = worst.max((pair[1].state.to_vector() - predicted).amax());
        }
        Ok(worst)
    }
}

//! Reference-tracking NMPC solved by sequential quadratic programming.
//!
//! Decision vector: `[xi_0, ..., xi_N, u_0, ..., u_{N-1}]` with
//! `xi = (x, y, psi, v)` and `u = (steering, accel)`. The terminal inputs
//! are not decision variables and are zero by construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{BoxLimits, StageConstraints};
use crate::dynamics::{linearize, ControlInput, DynamicsError, LinearizedDynamics, VehicleParams, VehicleState};
use crate::qp::{solve_qp, Duals, QpError, QpSettings, QpStatus, QuadraticProgram, WarmStart};
use crate::reference::ReferenceState;
use crate::trajectory::{Stage, Trajectory};

const NX: usize = 4;
const NU: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum NmpcError {
    #[error("expected {expected} {what}, got {found}")]
    Horizon {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid weights: {0}")]
    InvalidWeights(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Diagonal tracking weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    /// State weights for (x, y, psi, v).
    pub q: [f64; 4],
    /// Input weights for (steering, accel).
    pub r: [f64; 2],
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            q: [0.1, 0.1, 1.0, 0.5],
            r: [0.01, 0.1],
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), NmpcError> {
        if self.q.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(NmpcError::InvalidWeights("state weights must be non-negative"));
        }
        if self.r.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(NmpcError::InvalidWeights("input weights must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqpSettings {
    pub iterations: usize,
    pub qp: QpSettings,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            iterations: 3,
            qp: QpSettings::default(),
        }
    }
}

fn state_var(k: usize) -> usize {
    NX * k
}

fn input_var(n: usize, k: usize) -> usize {
    NX * (n + 1) + NU * k
}

fn ref_vector(r: &ReferenceState) -> [f64; 4] {
    [r.x, r.y, r.h, r.v]
}

/// Assemble the QP of one SQP iteration.
pub fn build_qp(
    lins: &[LinearizedDynamics],
    refs: &[ReferenceState],
    stages: &[StageConstraints],
    limits: &BoxLimits,
    weights: &Weights,
    xi0: &VehicleState,
) -> Result<QuadraticProgram, NmpcError> {
    let n = lins.len();
    let check = |what, expected, found| {
        if expected == found {
            Ok(())
        } else {
            Err(NmpcError::Horizon {
                what,
                expected,
                found,
            })
        }
    };
    check("references", n + 1, refs.len())?;
    check("stage constraint sets", n, stages.len())?;
    weights.validate()?;

    let nv = NX * (n + 1) + NU * n;
    let mut hessian = DMatrix::zeros(nv, nv);
    let mut gradient = DVector::zeros(nv);
    for (k, r) in refs.iter().enumerate() {
        let rv = ref_vector(r);
        for i in 0..NX {
            let idx = state_var(k) + i;
            hessian[(idx, idx)] = 2.0 * weights.q[i];
            gradient[idx] = -2.0 * weights.q[i] * rv[i];
        }
    }
    for k in 0..n {
        for i in 0..NU {
            let idx = input_var(n, k) + i;
            hessian[(idx, idx)] = 2.0 * weights.r[i];
        }
    }

    let mut eq_matrix = DMatrix::zeros(NX * n, nv);
    let mut eq_rhs = DVector::zeros(NX * n);
    for (k, lin) in lins.iter().enumerate() {
        let row = NX * k;
        for i in 0..NX {
            eq_matrix[(row + i, state_var(k + 1) + i)] = 1.0;
            for j in 0..NX {
                eq_matrix[(row + i, state_var(k) + j)] = -lin.a[(i, j)];
            }
            for j in 0..NU {
                eq_matrix[(row + i, input_var(n, k) + j)] = -lin.b[(i, j)];
            }
            eq_rhs[row + i] = lin.c[i];
        }
    }

    let halfspaces: usize = stages.iter().map(|s| s.halfspaces().count()).sum();
    let mi = halfspaces + 2 * n;
    let mut ineq_matrix = DMatrix::zeros(mi, nv);
    let mut ineq_rhs = DVector::zeros(mi);
    let mut row = 0;
    for (k, sc) in stages.iter().enumerate() {
        let var = state_var(k + 1);
        for h in sc.halfspaces() {
            ineq_matrix[(row, var)] = h.normal[0];
            ineq_matrix[(row, var + 1)] = h.normal[1];
            ineq_rhs[row] = h.offset;
            row += 1;
        }
    }
    for k in 0..n {
        let (now, next) = (state_var(k) + 2, state_var(k + 1) + 2);
        ineq_matrix[(row, next)] = 1.0;
        ineq_matrix[(row, now)] = -1.0;
        ineq_rhs[row] = limits.dpsi_max;
        ineq_matrix[(row + 1, next)] = -1.0;
        ineq_matrix[(row + 1, now)] = 1.0;
        ineq_rhs[row + 1] = limits.dpsi_max;
        row += 2;
    }

    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(nv, f64::INFINITY);
    let start = xi0.to_vector();
    for i in 0..NX {
        lower[i] = start[i];
        upper[i] = start[i];
    }
    for k in 1..n {
        lower[state_var(k) + 3] = limits.v_min;
        upper[state_var(k) + 3] = limits.v_max;
    }
    if n > 0 {
        lower[state_var(n) + 3] = 0.0;
        upper[state_var(n) + 3] = 0.0;
    }
    for k in 0..n {
        let u = input_var(n, k);
        lower[u] = limits.delta_min;
        upper[u] = limits.delta_max;
        lower[u + 1] = limits.a_min;
        upper[u + 1] = limits.a_max;
    }

    Ok(QuadraticProgram {
        hessian,
        gradient,
        eq_matrix,
        eq_rhs,
        ineq_matrix,
        ineq_rhs,
        lower,
        upper,
    })
}

fn pack(traj: &Trajectory) -> DVector<f64> {
    let n = traj.horizon();
    let mut z = DVector::zeros(NX * (n + 1) + NU * n);
    for (k, s) in traj.stages.iter().enumerate() {
        z.fixed_rows_mut::<4>(state_var(k)).copy_from(&s.state.to_vector());
        if k < n {
            z[input_var(n, k)] = s.input.steering;
            z[input_var(n, k) + 1] = s.input.accel;
        }
    }
    z
}

fn unpack(z: &DVector<f64>, n: usize) -> Trajectory {
    let stages = (0..=n)
        .map(|k| {
            let v = state_var(k);
            let state = VehicleState::new(z[v], z[v + 1], z[v + 2], z[v + 3]);
            let input = if k < n {
                let u = input_var(n, k);
                ControlInput::new(z[u], z[u + 1])
            } else {
                ControlInput::ZERO
            };
            Stage { state, input }
        })
        .collect();
    Trajectory { stages }
}

/// Tracking cost of a trajectory against its references.
pub fn tracking_cost(traj: &Trajectory, refs: &[ReferenceState], weights: &Weights) -> f64 {
    let n = traj.horizon();
    let mut cost = 0.0;
    for (s, r) in traj.stages.iter().zip(refs) {
        let e = s.state.to_vector();
        let rv = ref_vector(r);
        for i in 0..NX {
            cost += weights.q[i] * (e[i] - rv[i]).powi(2);
        }
    }
    for s in &traj.stages[..n] {
        cost += weights.r[0] * s.input.steering.powi(2) + weights.r[1] * s.input.accel.powi(2);
    }
    cost
}

fn rollout_cost(candidate: &Trajectory, problem: &NmpcProblem<'_>) -> f64 {
    let inputs: Vec<ControlInput> = candidate.stages[..candidate.horizon()]
        .iter()
        .map(|s| s.input)
        .collect();
    match Trajectory::rollout(problem.xi0, &inputs, problem.params) {
        Ok(t) => tracking_cost(&t, problem.refs, problem.weights),
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NmpcStatus {
    Solved,
    Infeasible,
    IterationLimit,
}

impl From<QpStatus> for NmpcStatus {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Solved => NmpcStatus::Solved,
            QpStatus::Infeasible => NmpcStatus::Infeasible,
            QpStatus::IterationLimit => NmpcStatus::IterationLimit,
        }
    }
}

/// Per-iteration solver telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqpIterate {
    pub qp_status: QpStatus,
    pub qp_iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    /// Tracking cost of the iterate.
    pub cost: f64,
    /// Tracking cost of the iterate's inputs simulated on the nonlinear model.
    pub rollout_cost: f64,
    /// Largest nonlinear dynamics defect of the iterate.
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcSolution {
    pub status: NmpcStatus,
    pub trajectory: Option<Trajectory>,
    pub iterates: Vec<SqpIterate>,
}

pub struct NmpcProblem<'a> {
    pub xi0: VehicleState,
    pub refs: &'a [ReferenceState],
    pub stages: &'a [StageConstraints],
    pub limits: &'a BoxLimits,
    pub weights: &'a Weights,
    pub params: &'a VehicleParams,
}

/// Run the SQP loop starting from `incumbent`, whose first state is
/// replaced by `problem.xi0`.
pub fn solve_nmpc(
    problem: &NmpcProblem<'_>,
    incumbent: &Trajectory,
    settings: &SqpSettings,
) -> Result<NmpcSolution, NmpcError> {
    let n = incumbent.horizon();
    if problem.refs.len() != n + 1 {
        return Err(NmpcError::Horizon {
            what: "references",
            expected: n + 1,
            found: problem.refs.len(),
        });
    }
    let mut current = incumbent.clone();
    current.stages[0].state = problem.xi0;
    let mut duals: Option<Duals> = None;
    let mut iterates = Vec::with_capacity(settings.iterations);

    for _ in 0..settings.iterations.max(1) {
        let lins = current.stages[..n]
            .iter()
            .map(|s| linearize(&s.state, &s.input, problem.params))
            .collect::<Result<Vec<_>, _>>()?;
        let qp = build_qp(
            &lins,
            problem.refs,
            problem.stages,
            problem.limits,
            problem.weights,
            &problem.xi0,
        )?;
        let warm = WarmStart {
            x: Some(pack(&current)),
            duals: duals.take(),
        };
        let sol = solve_qp(&qp, &settings.qp, Some(&warm))?;
        let candidate = unpack(&sol.x, n);
        let defect = if sol.status == QpStatus::Solved {
            candidate.dynamics_defect(problem.params).unwrap_or(f64::INFINITY)
        } else {
            f64::NAN
        };
        iterates.push(SqpIterate {
            qp_status: sol.status,
            qp_iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            polished: sol.polished,
            cost: tracking_cost(&candidate, problem.refs, problem.weights),
            rollout_cost: rollout_cost(&candidate, problem),
            defect,
        });
        if sol.status != QpStatus::Solved {
            return Ok(NmpcSolution {
                status: sol.status.into(),
                trajectory: None,
                iterates,
            });
        }
        if candidate
            .stages
            .iter()
            .any(|s| s.input.steering.abs() >= std::f64::consts::FRAC_PI_2)
        {
            return Err(NmpcError::Dynamics(DynamicsError::SteeringDomain(
                candidate.stages[0].input.steering,
            )));
        }
        current = candidate;
        duals = Some(sol.duals);
    }
    Ok(NmpcSolution {
        status: NmpcStatus::Solved,
        trajectory: Some(current),
        iterates,
    })
}

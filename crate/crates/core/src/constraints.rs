//! Convex position constraints per horizon stage and the box limits.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{probe_from, BoundarySet};
use crate::grid::WorldPoint;
use crate::reachability::{CellClass, DrivableMap};
use crate::reference::ReferenceState;
use crate::trajectory::{Stage, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("boundary set has no probe at heading {0} rad")]
    MissingProbe(f64),
    #[error("expected {expected} reference stages, got {found}")]
    HorizonMismatch { expected: usize, found: usize },
    #[error("invalid limits: {0}")]
    InvalidLimits(&'static str),
}

/// Points `p` with `normal . p <= offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfSpace {
    /// Half-space with unit normal along `heading`.
    pub fn along(heading: f64, offset: f64) -> Self {
        Self {
            normal: [heading.cos(), heading.sin()],
            offset,
        }
    }

    /// `normal . p - offset`; non-positive inside.
    pub fn violation(&self, p: WorldPoint) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y - self.offset
    }

    pub fn contains(&self, p: WorldPoint, tol: f64) -> bool {
        self.violation(p) <= tol
    }

    fn dot(&self, p: WorldPoint) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConstraints {
    pub left: HalfSpace,
    pub right: HalfSpace,
    pub front: Option<HalfSpace>,
}

impl StageConstraints {
    pub fn halfspaces(&self) -> impl Iterator<Item = &HalfSpace> {
        [&self.left, &self.right].into_iter().chain(self.front.as_ref())
    }

    pub fn max_violation(&self, p: WorldPoint) -> f64 {
        self.halfspaces()
            .map(|h| h.violation(p))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoxLimits {
    /// Largest heading change per step.
    pub dpsi_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for BoxLimits {
    fn default() -> Self {
        Self {
            dpsi_max: FRAC_PI_4,
            v_min: 0.0,
            v_max: 5.56,
            delta_min: -FRAC_PI_4,
            delta_max: FRAC_PI_4,
            a_min: -7.0,
            a_max: 3.0,
        }
    }
}

impl BoxLimits {
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if !(self.dpsi_max >= 0.0) {
            return Err(ConstraintError::InvalidLimits("dpsi_max must be non-negative"));
        }
        if !(self.v_min <= self.v_max) {
            return Err(ConstraintError::InvalidLimits("v_min exceeds v_max"));
        }
        if !(self.delta_min <= self.delta_max) {
            return Err(ConstraintError::InvalidLimits("delta_min exceeds delta_max"));
        }
        if !(self.a_min <= self.a_max) {
            return Err(ConstraintError::InvalidLimits("a_min exceeds a_max"));
        }
        if self.delta_min <= -FRAC_PI_2 || self.delta_max >= FRAC_PI_2 {
            return Err(ConstraintError::InvalidLimits("steering must stay inside (-pi/2, pi/2)"));
        }
        Ok(())
    }
}

/// Box and heading-rate check of a stage transition with closed bounds,
/// widened by `tol`.
pub fn check_box_within(from: &Stage, to: &Stage, limits: &BoxLimits, tol: f64) -> bool {
    let within = |x: f64, lo: f64, hi: f64| x >= lo - tol && x <= hi + tol;
    (to.state.psi - from.state.psi).abs() <= limits.dpsi_max + tol
        && within(from.state.v, limits.v_min, limits.v_max)
        && within(to.state.v, limits.v_min, limits.v_max)
        && within(from.input.steering, limits.delta_min, limits.delta_max)
        && within(from.input.accel, limits.a_min, limits.a_max)
}

pub fn check_box(from: &Stage, to: &Stage, limits: &BoxLimits) -> bool {
    check_box_within(from, to, limits, 0.0)
}

/// Left and right half-spaces of a stage from its lateral probes at
/// headings `+pi/2` and `-pi/2`.
pub fn lateral_halfspaces(
    psi: f64,
    position: WorldPoint,
    boundaries: &BoundarySet,
    margin: f64,
) -> Result<(HalfSpace, HalfSpace), ConstraintError> {
    let left = boundaries
        .find(FRAC_PI_2)
        .ok_or(ConstraintError::MissingProbe(FRAC_PI_2))?;
    let right = boundaries
        .find(-FRAC_PI_2)
        .ok_or(ConstraintError::MissingProbe(-FRAC_PI_2))?;
    Ok(lateral_pair(psi, position, left.distance, right.distance, margin))
}

fn lateral_pair(
    psi: f64,
    position: WorldPoint,
    left_free: f64,
    right_free: f64,
    margin: f64,
) -> (HalfSpace, HalfSpace) {
    let mut left = HalfSpace::along(psi + FRAC_PI_2, 0.0);
    left.offset = left.dot(position) + (left_free - margin).max(0.0);
    let mut right = HalfSpace::along(psi - FRAC_PI_2, 0.0);
    right.offset = right.dot(position) + (right_free - margin).max(0.0);
    (left, right)
}

/// Half-space whose boundary passes through `boundary` with its normal
/// along the reference heading.
pub fn front_halfspace(heading: f64, boundary: WorldPoint) -> HalfSpace {
    let mut h = HalfSpace::along(heading, 0.0);
    h.offset = h.dot(boundary);
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorSettings {
    /// Subtracted from every lateral free distance.
    pub margin: f64,
    /// Buffer passed to the advisor.
    pub buffer: f64,
    /// Gap kept between planned positions and probed boundaries.
    pub clearance: f64,
}

impl Default for CorridorSettings {
    fn default() -> Self {
        Self {
            margin: 0.0,
            buffer: 0.0,
            clearance: 1e-3,
        }
    }
}

/// Constraints for stages `1..=N` of the next plan, probed around the
/// previous trajectory.
///
/// The front half-space is shared by all stages. It is probed along the
/// last reference heading from the furthest stage of `previous` that is
/// reachable through safe cells only.
pub fn build_stage_constraints(
    dmap: &DrivableMap,
    previous: &Trajectory,
    refs: &[ReferenceState],
    settings: &CorridorSettings,
) -> Result<Vec<StageConstraints>, ConstraintError> {
    let n = previous.horizon();
    if refs.len() != n + 1 {
        return Err(ConstraintError::HorizonMismatch {
            expected: n + 1,
            found: refs.len(),
        });
    }
    let safe_prefix = previous
        .stages
        .iter()
        .take_while(|s| dmap.class_at(s.state.position()) == Some(CellClass::SafeDrivable))
        .count();
    let anchor = previous.stages[safe_prefix.saturating_sub(1)].state.position();
    let heading = refs[n].h;
    let (boundary, ahead) = probe_from(dmap, anchor, heading, settings.buffer);
    let mut front = front_halfspace(heading, boundary);
    if ahead > settings.clearance {
        front.offset -= settings.clearance;
    }

    let mut out = Vec::with_capacity(n);
    for stage in &previous.stages[1..] {
        let p = stage.state.position();
        let psi = stage.state.psi;
        let (_, left_free) = probe_from(dmap, p, psi + FRAC_PI_2, settings.buffer);
        let (_, right_free) = probe_from(dmap, p, psi - FRAC_PI_2, settings.buffer);
        let (mut left, mut right) = lateral_pair(psi, p, left_free, right_free, settings.margin);
        if left_free - settings.margin > settings.clearance {
            left.offset -= settings.clearance;
        }
        if right_free - settings.margin > settings.clearance {
            right.offset -= settings.clearance;
        }
        out.push(StageConstraints {
            left,
            right,
            front: Some(front),
        });
    }
    Ok(out)
}

/// Pull every front half-space back so that it also keeps stages behind
/// `stop`, a point on a line normal to the front direction.
pub fn cap_front(stages: &mut [StageConstraints], stop: WorldPoint) {
    for sc in stages {
        if let Some(front) = sc.front.as_mut() {
            front.offset = front.offset.min(front.dot(stop));
        }
    }
}

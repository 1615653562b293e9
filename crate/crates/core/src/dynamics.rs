//! Discrete kinematic bicycle model and its exact Jacobian linearization.

use nalgebra::{Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WorldPoint;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("steering angle {0} rad is outside (-pi/2, pi/2)")]
    SteeringDomain(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(&'static str),
}

/// Geometry and sampling time of the controlled vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// CoG to front axle.
    pub l_f: f64,
    /// CoG to rear axle.
    pub l_r: f64,
    pub width: f64,
    /// Sampling time in seconds.
    pub ts: f64,
    /// Body length ahead of the front axle.
    pub front_overhang: f64,
    /// Body length behind the rear axle.
    pub rear_overhang: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            l_f: 1.82,
            l_r: 1.0,
            width: 1.8,
            ts: 0.1,
            front_overhang: 0.9,
            rear_overhang: 0.8,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let positive = [self.l_f, self.l_r, self.width, self.ts];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(DynamicsError::InvalidParams(
                "l_f, l_r, width and ts must be positive",
            ));
        }
        if !(self.front_overhang >= 0.0 && self.rear_overhang >= 0.0) {
            return Err(DynamicsError::InvalidParams("overhangs must be non-negative"));
        }
        Ok(())
    }

    /// Distance from the CoG to the front bumper.
    pub fn front_extent(&self) -> f64 {
        self.l_f + self.front_overhang
    }

    /// Distance from the CoG to the rear bumper.
    pub fn rear_extent(&self) -> f64 {
        self.l_r + self.rear_overhang
    }

    pub fn length(&self) -> f64 {
        self.front_extent() + self.rear_extent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn position(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite() && self.v.is_finite()
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.psi, self.v)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Steering angle in radians.
    pub steering: f64,
    /// Longitudinal acceleration in m/s^2.
    pub accel: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        steering: 0.0,
        accel: 0.0,
    };

    pub const fn new(steering: f64, accel: f64) -> Self {
        Self { steering, accel }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.steering, self.accel)
    }
}

/// Affine model `next = a * state + b * input + c`, exact at the expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Vector4<f64>,
}

impl LinearizedDynamics {
    pub fn predict(&self, state: &Vector4<f64>, input: &Vector2<f64>) -> Vector4<f64> {
        self.a * state + self.b * input + self.c
    }
}

fn check_steering(steering: f64) -> Result<(), DynamicsError> {
    if steering.is_finite() && steering.abs() < std::f64::consts::FRAC_PI_2 {
        Ok(())
    } else {
        Err(DynamicsError::SteeringDomain(steering))
    }
}

/// Slip angle of the CoG velocity for a given front steering angle.
pub fn slip_angle(steering: f64, params: &VehicleParams) -> Result<f64, DynamicsError> {
    check_steering(steering)?;
    let ratio = params.l_r / (params.l_f + params.l_r);
    Ok((ratio * steering.tan()).atan())
}

/// d(beta)/d(delta)
fn slip_angle_derivative(steering: f64, params: &VehicleParams) -> f64 {
    let ratio = params.l_r / (params.l_f + params.l_r);
    let t = steering.tan();
    let sec2 = 1.0 + t * t;
    ratio * sec2 / (1.0 + ratio * ratio * t * t)
}

/// One forward-Euler step of the kinematic bicycle model.
pub fn step(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<VehicleState, DynamicsError> {
    let beta = slip_angle(input.steering, params)?;
    let ts = params.ts;
    let course = state.psi + beta;
    Ok(VehicleState {
        x: state.x + state.v * course.cos() * ts,
        y: state.y + state.v * course.sin() * ts,
        psi: state.psi + state.v / params.l_r * beta.sin() * ts,
        v: state.v + input.accel * ts,
    })
}

/// Analytic Jacobians of [`step`] with respect to state and input.
pub fn linearize(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<LinearizedDynamics, DynamicsError> {
    let beta = slip_angle(input.steering, params)?;
    let dbeta = slip_angle_derivative(input.steering, params);
    let ts = params.ts;
    let v = state.v;
    let (sc, cc) = (state.psi + beta).sin_cos();

    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, -v * sc * ts, cc * ts,
        0.0, 1.0, v * cc * ts, sc * ts,
        0.0, 0.0, 1.0, beta.sin() / params.l_r * ts,
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let b = Matrix4x2::new(
        -v * sc * dbeta * ts, 0.0,
        v * cc * dbeta * ts, 0.0,
        v / params.l_r * beta.cos() * dbeta * ts, 0.0,
        0.0, ts,
    );
    let next = step(state, input, params)?.to_vector();
    let c = next - a * state.to_vector() - b * input.to_vector();
    Ok(LinearizedDynamics { a, b, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn slip_angle_values() {
        let p = VehicleParams::default();
        assert_eq!(slip_angle(0.0, &p).unwrap(), 0.0);
        // atan(1 / 2.82) = 0.3407757427696201 (independent evaluation)
        assert_abs_diff_eq!(slip_angle(FRAC_PI_4, &p).unwrap(), 0.340_775_743, epsilon = 1e-8);
        for d in [0.1, 0.3, 0.7, 1.2] {
            assert_eq!(slip_angle(-d, &p).unwrap(), -slip_angle(d, &p).unwrap());
        }
        assert!(slip_angle(std::f64::consts::FRAC_PI_2, &p).is_err());
        assert!(slip_angle(-2.0, &p).is_err());
    }

    #[test]
    fn rest_is_a_fixpoint() {
        let p = VehicleParams::default();
        let s = VehicleState::new(3.0, -2.0, 0.4, 0.0);
        assert_eq!(step(&s, &ControlInput::new(0.3, 0.0), &p).unwrap(), s);
    }

    #[test]
    fn straight_roll() {
        let p = VehicleParams::default();
        let s = step(&VehicleState::new(0.0, 0.0, 0.0, 1.0), &ControlInput::ZERO, &p).unwrap();
        assert_abs_diff_eq!(s.x, 0.1, epsilon = 1e-15);
        assert_eq!((s.y, s.psi, s.v), (0.0, 0.0, 1.0));
    }

    #[test]
    fn turning_heading_rate() {
        let p = VehicleParams::default();
        let s = step(
            &VehicleState::new(0.0, 0.0, 0.0, 1.0),
            &ControlInput::new(FRAC_PI_4, 0.0),
            &p,
        )
        .unwrap();
        assert_abs_diff_eq!(s.psi, 0.033_421_833, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_structure() {
        let p = VehicleParams::default();
        let lin = linearize(&VehicleState::new(1.0, 2.0, 0.0, 3.0), &ControlInput::ZERO, &p).unwrap();
        assert_eq!(lin.a[(3, 3)], 1.0);
        assert_eq!(lin.b[(3, 1)], p.ts);
        assert_abs_diff_eq!(lin.a[(0, 3)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn exact_at_expansion_point() {
        let p = VehicleParams::default();
        let s = VehicleState::new(4.0, -1.5, 0.7, 2.3);
        let u = ControlInput::new(-0.4, 1.1);
        let lin = linearize(&s, &u, &p).unwrap();
        let predicted = lin.predict(&s.to_vector(), &u.to_vector());
        let truth = step(&s, &u, &p).unwrap().to_vector();
        assert_abs_diff_eq!((predicted - truth).amax(), 0.0, epsilon = 1e-12);
    }
}

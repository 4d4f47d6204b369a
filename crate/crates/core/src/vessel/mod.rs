//! 3-DOF surface vessel model: η̇ = R(ψ)ν, M ν̇ + C(ν)ν + D(ν)ν = τ + τ_d.

mod model;
mod params;

pub use model::{
    derivative, derivative_jacobian, linearize, rk4_jacobians, rk4_step_raw, rotation_matrix,
    step_rk4, Linearization, LinearizationMode,
};
pub use params::{VesselParams, VesselParamsConfig};

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_to_pi;

pub type StateVector = Vector6<f64>;

/// Pose η = [x, y, ψ] and body velocity ν = [u, v, r].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct VesselState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl VesselState {
    pub fn new(x: f64, y: f64, psi: f64, u: f64, v: f64, r: f64) -> Self {
        Self {
            x,
            y,
            psi: wrap_to_pi(psi),
            u,
            v,
            r,
        }
    }

    /// Builds a state from an extended state vector, wrapping the heading.
    pub fn from_vector(x: &StateVector) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4], x[5])
    }

    pub fn to_vector(&self) -> StateVector {
        Vector6::new(self.x, self.y, self.psi, self.u, self.v, self.r)
    }

    pub fn nu(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.r)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Generalised control forces τ = [τ_u, τ_v, τ_r].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ControlInput {
    pub tau_u: f64,
    pub tau_v: f64,
    pub tau_r: f64,
}

impl ControlInput {
    pub fn new(tau_u: f64, tau_v: f64, tau_r: f64) -> Self {
        Self {
            tau_u,
            tau_v,
            tau_r,
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.tau_u, self.tau_v, self.tau_r)
    }

    /// Component-wise clamp into `[lower, upper]`.
    pub fn clamped(&self, lower: &ControlInput, upper: &ControlInput) -> Self {
        Self::new(
            self.tau_u.clamp(lower.tau_u, upper.tau_u),
            self.tau_v.clamp(lower.tau_v, upper.tau_v),
            self.tau_r.clamp(lower.tau_r, upper.tau_r),
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.tau_u.is_finite() && self.tau_v.is_finite() && self.tau_r.is_finite()
    }
}

impl std::ops::Sub for ControlInput {
    type Output = ControlInput;

    fn sub(self, rhs: ControlInput) -> ControlInput {
        ControlInput::new(
            self.tau_u - rhs.tau_u,
            self.tau_v - rhs.tau_v,
            self.tau_r - rhs.tau_r,
        )
    }
}

/// Environmental forces τ_d acting in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Disturbance {
    pub tau_d1: f64,
    pub tau_d2: f64,
    pub tau_d3: f64,
}

impl Disturbance {
    pub fn new(tau_d1: f64, tau_d2: f64, tau_d3: f64) -> Self {
        Self {
            tau_d1,
            tau_d2,
            tau_d3,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.tau_d1, self.tau_d2, self.tau_d3)
    }
}

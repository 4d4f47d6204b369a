use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use super::{ControlInput, Disturbance, StateVector, VesselParams, VesselState};
use crate::error::{Error, Result};

/// Body-to-world rotation about the vertical axis.
pub fn rotation_matrix(psi: f64) -> Matrix3<f64> {
    let (s, c) = psi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[inline]
fn nu_dot(nu: &Vector3<f64>, force: &Vector3<f64>, params: &VesselParams) -> Vector3<f64> {
    params.mass_inv() * (force - params.coriolis(nu) * nu - params.damping(nu) * nu)
}

/// Time derivative of the extended state on an unwrapped state vector.
/// `force` is τ + τ_d.
#[inline]
pub(crate) fn derivative_vec(
    x: &StateVector,
    force: &Vector3<f64>,
    params: &VesselParams,
) -> StateVector {
    let nu = Vector3::new(x[3], x[4], x[5]);
    let (s, c) = x[2].sin_cos();
    let acc = nu_dot(&nu, force, params);
    Vector6::new(
        c * nu[0] - s * nu[1],
        s * nu[0] + c * nu[1],
        nu[2],
        acc[0],
        acc[1],
        acc[2],
    )
}

/// ẋ = [R(ψ)ν; M⁻¹(τ + τ_d − C(ν)ν − D(ν)ν)].
pub fn derivative(
    state: &VesselState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &VesselParams,
) -> StateVector {
    derivative_vec(
        &state.to_vector(),
        &(input.to_vector() + dist.to_vector()),
        params,
    )
}

/// Analytic continuous-time Jacobians (∂ẋ/∂x, ∂ẋ/∂τ).
pub fn derivative_jacobian(
    x: &StateVector,
    params: &VesselParams,
) -> (Matrix6<f64>, Matrix6x3<f64>) {
    let (u, v, r) = (x[3], x[4], x[5]);
    let (s, c) = x[2].sin_cos();
    let m = params.mass();
    let m0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let m1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let c0 = m0.dot(&Vector3::new(u, v, r));
    let c1 = m1.dot(&Vector3::new(u, v, r));

    // C(ν)ν = [-c1 r, c0 r, c1 u - c0 v]
    let mut dc = Matrix3::zeros();
    for j in 0..3 {
        dc[(0, j)] = -r * m1[j];
        dc[(1, j)] = r * m0[j];
        dc[(2, j)] = u * m1[j] - v * m0[j];
    }
    dc[(0, 2)] -= c1;
    dc[(1, 2)] += c0;
    dc[(2, 0)] += c1;
    dc[(2, 1)] -= c0;

    let dq = params.damping_quadratic();
    let dd = params.damping_linear()
        + Matrix3::from_diagonal(&Vector3::new(
            2.0 * dq[0] * u.abs(),
            2.0 * dq[1] * v.abs(),
            2.0 * dq[2] * r.abs(),
        ));

    let mut a = Matrix6::zeros();
    a[(0, 2)] = -s * u - c * v;
    a[(1, 2)] = c * u - s * v;
    a.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&rotation_matrix(x[2]));
    a.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-(params.mass_inv() * (dc + dd))));

    let mut b = Matrix6x3::zeros();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(params.mass_inv());
    (a, b)
}

/// One classical RK4 step on the unwrapped state vector.
pub fn rk4_step_raw(
    x: &StateVector,
    tau: &Vector3<f64>,
    dist: &Vector3<f64>,
    params: &VesselParams,
    dt: f64,
) -> StateVector {
    let w = tau + dist;
    let k1 = derivative_vec(x, &w, params);
    let k2 = derivative_vec(&(x + k1 * (0.5 * dt)), &w, params);
    let k3 = derivative_vec(&(x + k2 * (0.5 * dt)), &w, params);
    let k4 = derivative_vec(&(x + k3 * dt), &w, params);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// RK4 step together with its exact discrete Jacobians, obtained by
/// differentiating through the four stages.
pub fn rk4_jacobians(
    x: &StateVector,
    tau: &Vector3<f64>,
    dist: &Vector3<f64>,
    params: &VesselParams,
    dt: f64,
) -> (StateVector, Matrix6<f64>, Matrix6x3<f64>) {
    let w = tau + dist;
    let h2 = 0.5 * dt;
    let eye = Matrix6::<f64>::identity();

    let k1 = derivative_vec(x, &w, params);
    let (a1, b) = derivative_jacobian(x, params);
    let k1x = a1;
    let k1u = b;

    let x2 = x + k1 * h2;
    let k2 = derivative_vec(&x2, &w, params);
    let (a2, _) = derivative_jacobian(&x2, params);
    let k2x = a2 * (eye + k1x * h2);
    let k2u = a2 * (k1u * h2) + b;

    let x3 = x + k2 * h2;
    let k3 = derivative_vec(&x3, &w, params);
    let (a3, _) = derivative_jacobian(&x3, params);
    let k3x = a3 * (eye + k2x * h2);
    let k3u = a3 * (k2u * h2) + b;

    let x4 = x + k3 * dt;
    let k4 = derivative_vec(&x4, &w, params);
    let (a4, _) = derivative_jacobian(&x4, params);
    let k4x = a4 * (eye + k3x * dt);
    let k4u = a4 * (k3u * dt) + b;

    let s = dt / 6.0;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * s;
    let ad = eye + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * s;
    let bd = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * s;
    (next, ad, bd)
}

/// Fixed-step RK4 with the heading re-wrapped to (-π, π].
pub fn step_rk4(
    state: &VesselState,
    input: &ControlInput,
    dist: &Disturbance,
    params: &VesselParams,
    dt: f64,
) -> Result<VesselState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", "integration step must be positive"));
    }
    let next = rk4_step_raw(
        &state.to_vector(),
        &input.to_vector(),
        &dist.to_vector(),
        params,
        dt,
    );
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationDiverged { time: dt });
    }
    Ok(VesselState::from_vector(&next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearizationMode {
    /// Analytic continuous-time Jacobians.
    Continuous,
    /// Central finite differences of the continuous dynamics.
    FiniteDifference { step: f64 },
    /// Analytic Jacobians of one RK4 step of length `dt`.
    DiscreteRk4 { dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
    pub mode: LinearizationMode,
}

pub fn linearize(
    state: &VesselState,
    input: &ControlInput,
    params: &VesselParams,
    mode: LinearizationMode,
) -> Linearization {
    let x = state.to_vector();
    let tau = input.to_vector();
    let (a, b) = match mode {
        LinearizationMode::Continuous => derivative_jacobian(&x, params),
        LinearizationMode::DiscreteRk4 { dt } => {
            let (_, a, b) = rk4_jacobians(&x, &tau, &Vector3::zeros(), params, dt);
            (a, b)
        }
        LinearizationMode::FiniteDifference { step } => {
            let mut a = Matrix6::zeros();
            let mut b = Matrix6x3::zeros();
            for j in 0..6 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += step;
                xm[j] -= step;
                let col = (derivative_vec(&xp, &tau, params) - derivative_vec(&xm, &tau, params))
                    / (2.0 * step);
                a.set_column(j, &col);
            }
            for j in 0..3 {
                let mut tp = tau;
                let mut tm = tau;
                tp[j] += step;
                tm[j] -= step;
                let col = (derivative_vec(&x, &tp, params) - derivative_vec(&x, &tm, params))
                    / (2.0 * step);
                b.set_column(j, &col);
            }
            (a, b)
        }
    };
    Linearization { a, b, mode }
}

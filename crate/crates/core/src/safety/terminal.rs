//! Terminal velocity ellipsoid from an LQR design on the linearised velocity
//! subsystem, sized to the input and velocity bounds and certified by
//! nonlinear rollouts.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::vessel::{rk4_jacobians, rk4_step_raw, StateVector, VesselParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalSetConfig {
    /// Diagonal LQR state weight on ν.
    pub q_diag: [f64; 3],
    /// Diagonal LQR input weight on τ.
    pub r_diag: [f64; 3],
    pub certify_samples: usize,
    pub certify_steps: usize,
    /// Factor applied to α after a failed certification.
    pub shrink: f64,
    pub max_shrinks: usize,
    pub seed: u64,
}

impl Default for TerminalSetConfig {
    fn default() -> Self {
        Self {
            q_diag: [0.3, 0.5, 2.0],
            r_diag: [0.1, 1.0, 10.0],
            certify_samples: 1000,
            certify_steps: 50,
            shrink: 0.9,
            max_shrinks: 40,
            seed: 0,
        }
    }
}

/// `{ν : νᵀ P ν ≤ 1}` together with the local controller that keeps it
/// invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub p: Matrix3<f64>,
    /// LQR gain, u = −K ν.
    pub gain: Matrix3<f64>,
    /// Lyapunov matrix before scaling.
    pub p_raw: Matrix3<f64>,
    pub alpha: f64,
    pub dt: f64,
}

impl TerminalSet {
    pub fn level(&self, nu: &Vector3<f64>) -> f64 {
        (nu.transpose() * self.p * nu)[0]
    }

    pub fn contains(&self, nu: &Vector3<f64>) -> bool {
        self.level(nu) <= 1.0
    }

    /// Multiplies the quadratic form by `factor`; semi-axes shrink by
    /// `√factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: self.p * factor,
            alpha: self.alpha / factor,
            ..self.clone()
        }
    }

    /// Semi-axis lengths, ascending.
    pub fn semi_axes(&self) -> Vector3<f64> {
        let mut ax: Vec<f64> = self
            .p
            .symmetric_eigenvalues()
            .iter()
            .map(|l| 1.0 / l.sqrt())
            .collect();
        ax.sort_by(f64::total_cmp);
        Vector3::from_vec(ax)
    }

    /// Boundary point `ν = L⁻ᵀ w` for a unit vector `w`, with `P = L Lᵀ`.
    pub fn boundary_point(&self, w: &Vector3<f64>) -> Vector3<f64> {
        let l = Cholesky::new(self.p)
            .expect("terminal matrix is positive definite")
            .l();
        l.transpose()
            .solve_upper_triangular(&(w / w.norm()))
            .expect("triangular factor is invertible")
    }
}

/// Velocity block of the RK4 discretisation at rest.
fn velocity_linearization(params: &VesselParams, dt: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let (_, a, b) = rk4_jacobians(
        &StateVector::zeros(),
        &Vector3::zeros(),
        &Vector3::zeros(),
        params,
        dt,
    );
    (
        a.fixed_view::<3, 3>(3, 3).into_owned(),
        b.fixed_view::<3, 3>(3, 0).into_owned(),
    )
}

/// Discrete algebraic Riccati equation by fixed-point iteration.
pub fn solve_dare(
    a: &Matrix3<f64>,
    b: &Matrix3<f64>,
    q: &Matrix3<f64>,
    r: &Matrix3<f64>,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let mut p = *q;
    for _ in 0..100_000 {
        let s = r + b.transpose() * p * b;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::TerminalSet("Riccati iteration singular".into()))?;
        let k = s_inv * b.transpose() * p * a;
        let next = q + a.transpose() * p * (a - b * k);
        let next = (next + next.transpose()) * 0.5;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::TerminalSet("Riccati iteration diverged".into()));
        }
        let done = (next - p).amax() <= 1e-13 * next.amax();
        p = next;
        if done {
            let k = (r + b.transpose() * p * b).try_inverse().unwrap() * b.transpose() * p * a;
            return Ok((p, k));
        }
    }
    Err(Error::TerminalSet(
        "Riccati iteration did not converge".into(),
    ))
}

/// Solves `Aᵀ P A − P + Q = 0` through the 9×9 Kronecker system.
pub fn solve_discrete_lyapunov(a: &Matrix3<f64>, q: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let at = a.transpose();
    let kron: SMatrix<f64, 9, 9> = at.kronecker(&at);
    let lhs = SMatrix::<f64, 9, 9>::identity() - kron;
    let rhs = SVector::<f64, 9>::from_column_slice(q.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::TerminalSet("closed loop not Schur stable".into()))?;
    let p = Matrix3::from_column_slice(sol.as_slice());
    Ok((p + p.transpose()) * 0.5)
}

/// Outcome of the sampled invariance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub samples: usize,
    pub steps: usize,
    /// Largest one-step increase of the level value (≤ 0 for a pass).
    pub max_level_increase: f64,
    /// Largest input-bound violation along any rollout.
    pub max_input_violation: f64,
    pub passed: bool,
}

/// Rolls boundary samples forward under `u = −Kν` with the nonlinear
/// dynamics and checks the level value and the input bounds.
pub fn certify_terminal_set(
    set: &TerminalSet,
    params: &VesselParams,
    samples: usize,
    steps: usize,
    rng: &mut impl Rng,
) -> Certification {
    let lb = params.input_lower().to_vector();
    let ub = params.input_upper().to_vector();
    let mut max_inc = f64::NEG_INFINITY;
    let mut max_viol: f64 = 0.0;
    for _ in 0..samples {
        let w = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let nu = set.boundary_point(&w);
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(3).copy_from(&nu);
        let mut level = set.level(&nu);
        for _ in 0..steps {
            let nu = x.fixed_rows::<3>(3).into_owned();
            let u = -(set.gain * nu);
            for i in 0..3 {
                max_viol = max_viol.max(lb[i] - u[i]).max(u[i] - ub[i]);
            }
            x = rk4_step_raw(&x, &u, &Vector3::zeros(), params, set.dt);
            let next = set.level(&x.fixed_rows::<3>(3).into_owned());
            max_inc = max_inc.max(next - level);
            level = next;
        }
    }
    Certification {
        samples,
        steps,
        max_level_increase: max_inc,
        max_input_violation: max_viol,
        passed: max_inc <= 1e-12 && max_viol <= 0.0,
    }
}

/// Largest α such that `νᵀ P_raw ν ≤ α` respects the symmetric input and
/// velocity bounds under `u = −Kν`.
fn admissible_alpha(p_raw: &Matrix3<f64>, k: &Matrix3<f64>, params: &VesselParams) -> Result<f64> {
    let p_inv = p_raw
        .try_inverse()
        .ok_or_else(|| Error::TerminalSet("Lyapunov matrix singular".into()))?;
    let (ilb, iub) = (
        params.input_lower().to_vector(),
        params.input_upper().to_vector(),
    );
    let (slb, sub) = (params.state_lower(), params.state_upper());
    let mut alpha = f64::INFINITY;
    for i in 0..3 {
        let ubar = ilb[i].abs().min(iub[i]);
        let ki = k.row(i);
        let spread = (ki * p_inv * ki.transpose())[0];
        if spread > 0.0 {
            alpha = alpha.min(ubar * ubar / spread);
        }
        let xbar = slb[3 + i].abs().min(sub[3 + i]);
        alpha = alpha.min(xbar * xbar / p_inv[(i, i)]);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::TerminalSet("no admissible ellipsoid scale".into()));
    }
    Ok(alpha)
}

pub fn build_terminal_set(
    params: &VesselParams,
    dt: f64,
    cfg: &TerminalSetConfig,
) -> Result<TerminalSet> {
    if !(dt > 0.0) {
        return Err(Error::TerminalSet("dt must be positive".into()));
    }
    let (a, b) = velocity_linearization(params, dt);
    let q = Matrix3::from_diagonal(&Vector3::from(cfg.q_diag));
    let r = Matrix3::from_diagonal(&Vector3::from(cfg.r_diag));
    let (_, k) = solve_dare(&a, &b, &q, &r)?;
    let a_cl = a - b * k;
    let p_raw = solve_discrete_lyapunov(&a_cl, &(q + k.transpose() * r * k))?;
    if Cholesky::new(p_raw).is_none() {
        return Err(Error::TerminalSet(
            "Lyapunov matrix not positive definite".into(),
        ));
    }
    let mut alpha = admissible_alpha(&p_raw, &k, params)?;
    for _ in 0..=cfg.max_shrinks {
        let set = TerminalSet {
            p: p_raw / alpha,
            gain: k,
            p_raw,
            alpha,
            dt,
        };
        let mut rng = stream_rng(cfg.seed, Stream::Certification);
        let cert = certify_terminal_set(
            &set,
            params,
            cfg.certify_samples,
            cfg.certify_steps,
            &mut rng,
        );
        if cert.passed {
            return Ok(set);
        }
        alpha *= cfg.shrink;
    }
    Err(Error::TerminalSet("invariance certification failed".into()))
}

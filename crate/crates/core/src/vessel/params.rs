use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::ControlInput;
use crate::error::{Error, Result};

/// On-disk (TOML) form of the vessel parameters.
///
/// ```toml
/// mass = [[25.8, 0.0, 0.0], [0.0, 33.8, 0.0], [0.0, 0.0, 2.76]]
/// damping_linear = [[2.0, 0.0, 0.0], [0.0, 7.0, 0.0], [0.0, 0.0, 2.5]]
/// damping_quadratic = [1.5, 10.0, 2.0]
/// input_lower = [-4.0, -2.0, -1.5]
/// input_upper = [8.0, 2.0, 1.5]
/// velocity_lower = [-2.0, -1.5, -1.2]
/// velocity_upper = [2.5, 1.5, 1.2]
/// ```
///
/// `pose_lower`/`pose_upper` are optional; absent means unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VesselParamsConfig {
    /// Row-major 3×3 mass matrix including added mass [kg, kg, kg·m²].
    pub mass: [[f64; 3]; 3],
    /// Row-major 3×3 linear damping matrix.
    pub damping_linear: [[f64; 3]; 3],
    /// Per-axis quadratic damping coefficients (multiplying |ν_i|).
    pub damping_quadratic: [f64; 3],
    pub input_lower: [f64; 3],
    pub input_upper: [f64; 3],
    pub velocity_lower: [f64; 3],
    pub velocity_upper: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_lower: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_upper: Option<[f64; 3]>,
}

impl Default for VesselParamsConfig {
    fn default() -> Self {
        Self {
            mass: [[25.8, 0.0, 0.0], [0.0, 33.8, 0.0], [0.0, 0.0, 2.76]],
            damping_linear: [[2.0, 0.0, 0.0], [0.0, 7.0, 0.0], [0.0, 0.0, 2.5]],
            damping_quadratic: [1.5, 10.0, 2.0],
            input_lower: [-4.0, -2.0, -1.5],
            input_upper: [8.0, 2.0, 1.5],
            velocity_lower: [-2.0, -1.5, -1.2],
            velocity_upper: [2.5, 1.5, 1.2],
            pose_lower: None,
            pose_upper: None,
        }
    }
}

impl VesselParamsConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: format!("{origin}: {}", e.path()),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

/// Validated vessel parameters with the inverse mass matrix precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselParams {
    mass: Matrix3<f64>,
    mass_inv: Matrix3<f64>,
    damping_linear: Matrix3<f64>,
    damping_quadratic: Vector3<f64>,
    input_lower: ControlInput,
    input_upper: ControlInput,
    state_lower: [f64; 6],
    state_upper: [f64; 6],
}

impl Default for VesselParams {
    fn default() -> Self {
        Self::from_config(&VesselParamsConfig::default()).expect("default parameters are valid")
    }
}

fn matrix_from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

impl VesselParams {
    pub fn from_config(cfg: &VesselParamsConfig) -> Result<Self> {
        let all = cfg
            .mass
            .iter()
            .chain(cfg.damping_linear.iter())
            .flatten()
            .chain(cfg.damping_quadratic.iter())
            .chain(cfg.input_lower.iter())
            .chain(cfg.input_upper.iter());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "all coefficients must be finite".into(),
            ));
        }

        let mass = matrix_from_rows(&cfg.mass);
        if (mass - mass.transpose()).amax() > 1e-9 * mass.amax().max(1.0) {
            return Err(Error::InvalidParams("mass matrix must be symmetric".into()));
        }
        if mass.cholesky().is_none() {
            return Err(Error::InvalidParams(
                "mass matrix must be positive definite".into(),
            ));
        }
        let mass_inv = mass
            .try_inverse()
            .ok_or_else(|| Error::InvalidParams("mass matrix is singular".into()))?;

        let damping_linear = matrix_from_rows(&cfg.damping_linear);
        let sym = (damping_linear + damping_linear.transpose()) * 0.5;
        if sym.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::InvalidParams(
                "linear damping must have a positive semidefinite symmetric part".into(),
            ));
        }
        if cfg.damping_quadratic.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidParams(
                "quadratic damping must be non-negative".into(),
            ));
        }

        for i in 0..3 {
            if cfg.input_lower[i] >= cfg.input_upper[i] {
                return Err(Error::InvalidParams(format!(
                    "input bound {i}: lower must be below upper"
                )));
            }
            if !(cfg.velocity_lower[i] < 0.0 && cfg.velocity_upper[i] > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "velocity bound {i}: box must contain zero in its interior"
                )));
            }
        }

        let mut state_lower = [f64::NEG_INFINITY; 6];
        let mut state_upper = [f64::INFINITY; 6];
        if let Some(lo) = cfg.pose_lower {
            state_lower[..3].copy_from_slice(&lo);
        }
        if let Some(hi) = cfg.pose_upper {
            state_upper[..3].copy_from_slice(&hi);
        }
        state_lower[3..].copy_from_slice(&cfg.velocity_lower);
        state_upper[3..].copy_from_slice(&cfg.velocity_upper);
        if (0..6).any(|i| state_lower[i] >= state_upper[i] || state_lower[i].is_nan()) {
            return Err(Error::InvalidParams(
                "state bounds must satisfy lower < upper".into(),
            ));
        }

        Ok(Self {
            mass,
            mass_inv,
            damping_linear,
            damping_quadratic: Vector3::from(cfg.damping_quadratic),
            input_lower: ControlInput::new(
                cfg.input_lower[0],
                cfg.input_lower[1],
                cfg.input_lower[2],
            ),
            input_upper: ControlInput::new(
                cfg.input_upper[0],
                cfg.input_upper[1],
                cfg.input_upper[2],
            ),
            state_lower,
            state_upper,
        })
    }

    pub fn mass(&self) -> &Matrix3<f64> {
        &self.mass
    }

    pub fn mass_inv(&self) -> &Matrix3<f64> {
        &self.mass_inv
    }

    pub fn damping_linear(&self) -> &Matrix3<f64> {
        &self.damping_linear
    }

    pub fn damping_quadratic(&self) -> &Vector3<f64> {
        &self.damping_quadratic
    }

    pub fn input_lower(&self) -> &ControlInput {
        &self.input_lower
    }

    pub fn input_upper(&self) -> &ControlInput {
        &self.input_upper
    }

    /// Per-component magnitude bound, max(|lower|, |upper|).
    pub fn input_max(&self) -> ControlInput {
        let lo = self.input_lower.to_vector();
        let hi = self.input_upper.to_vector();
        ControlInput::from_vector(&lo.abs().sup(&hi.abs()))
    }

    pub fn state_lower(&self) -> &[f64; 6] {
        &self.state_lower
    }

    pub fn state_upper(&self) -> &[f64; 6] {
        &self.state_upper
    }

    /// Coriolis–centripetal matrix built from M so that C(ν) = -C(ν)ᵀ.
    pub fn coriolis(&self, nu: &Vector3<f64>) -> Matrix3<f64> {
        let m = &self.mass;
        let c0 = m[(0, 0)] * nu[0] + m[(0, 1)] * nu[1] + m[(0, 2)] * nu[2];
        let c1 = m[(1, 0)] * nu[0] + m[(1, 1)] * nu[1] + m[(1, 2)] * nu[2];
        Matrix3::new(0.0, 0.0, -c1, 0.0, 0.0, c0, c1, -c0, 0.0)
    }

    /// D(ν) = D_L + diag(d_q,i |ν_i|).
    pub fn damping(&self, nu: &Vector3<f64>) -> Matrix3<f64> {
        self.damping_linear
            + Matrix3::from_diagonal(&self.damping_quadratic.component_mul(&nu.abs()))
    }

    pub fn kinetic_energy(&self, nu: &Vector3<f64>) -> f64 {
        0.5 * nu.dot(&(self.mass * nu))
    }

    pub fn to_config(&self) -> VesselParamsConfig {
        let rows = |m: &Matrix3<f64>| {
            [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ]
        };
        let pose = |b: &[f64; 6], inf: f64| {
            if b[..3].iter().all(|&v| v == inf) {
                None
            } else {
                Some([b[0], b[1], b[2]])
            }
        };
        VesselParamsConfig {
            mass: rows(&self.mass),
            damping_linear: rows(&self.damping_linear),
            damping_quadratic: self.damping_quadratic.into(),
            input_lower: self.input_lower.to_vector().into(),
            input_upper: self.input_upper.to_vector().into(),
            velocity_lower: [
                self.state_lower[3],
                self.state_lower[4],
                self.state_lower[5],
            ],
            velocity_upper: [
                self.state_upper[3],
                self.state_upper[4],
                self.state_upper[5],
            ],
            pose_lower: pose(&self.state_lower, f64::NEG_INFINITY),
            pose_upper: pose(&self.state_upper, f64::INFINITY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = VesselParamsConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back = VesselParamsConfig::from_toml_str(&text, "inline").unwrap();
        assert_eq!(cfg, back);
        assert_eq!(VesselParams::from_config(&back).unwrap().to_config(), cfg);
    }

    #[test]
    fn shipped_config_file_matches_default() {
        let text = include_str!("../../config/vessel_default.toml");
        let cfg = VesselParamsConfig::from_toml_str(text, "vessel_default.toml").unwrap();
        assert_eq!(cfg, VesselParamsConfig::default());
    }

    #[test]
    fn rejects_singular_or_asymmetric_mass() {
        let mut cfg = VesselParamsConfig::default();
        cfg.mass[2][2] = 0.0;
        assert!(VesselParams::from_config(&cfg).is_err());

        let mut cfg = VesselParamsConfig::default();
        cfg.mass[0][1] = 1.0;
        assert!(VesselParams::from_config(&cfg).is_err());
    }

    #[test]
    fn rejects_negative_damping_and_inverted_bounds() {
        let mut cfg = VesselParamsConfig::default();
        cfg.damping_quadratic[1] = -1.0;
        assert!(VesselParams::from_config(&cfg).is_err());

        let mut cfg = VesselParamsConfig::default();
        cfg.input_lower[0] = 9.0;
        assert!(VesselParams::from_config(&cfg).is_err());
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let err = VesselParamsConfig::from_toml_str("mass_typo = 1", "v.toml").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn coriolis_is_skew_symmetric() {
        let mut cfg = VesselParamsConfig::default();
        cfg.mass[1][2] = 1.1;
        cfg.mass[2][1] = 1.1;
        let p = VesselParams::from_config(&cfg).unwrap();
        let nu = Vector3::new(1.3, -0.4, 0.7);
        let c = p.coriolis(&nu);
        assert!((c + c.transpose()).amax() < 1e-12);
        assert!(nu.dot(&(c * nu)).abs() < 1e-12);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::LidarScan;
use crate::vessel::ControlInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Reference surge speed U_max [m/s].
    pub u_ref: f64,
    pub gamma_r: f64,
    /// CTE decay γ_ε [1/m].
    pub gamma_eps: f64,
    pub gamma_theta: f64,
    /// Distance decay γ_d [1/m].
    pub gamma_d: f64,
    pub gamma_psf: f64,
    /// Path versus collision-avoidance tradeoff λ.
    pub lambda: f64,
    pub r_collision: f64,
    pub r_exists: f64,
    /// Input bound vector used to normalise filter modifications.
    pub u_max: ControlInput,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            u_ref: 1.0,
            gamma_r: 0.1,
            gamma_eps: 0.5,
            gamma_theta: 1.0,
            gamma_d: 0.1,
            gamma_psf: 1.0,
            lambda: 0.7,
            r_collision: -1000.0,
            r_exists: -0.05,
            u_max: ControlInput::new(8.0, 2.0, 1.5),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |field: &str, msg: &str| Err(Error::validation(format!("reward.{field}"), msg));
        if !(self.u_ref > 0.0) {
            return err("u_ref", "must be positive");
        }
        for (name, g) in [
            ("gamma_r", self.gamma_r),
            ("gamma_eps", self.gamma_eps),
            ("gamma_theta", self.gamma_theta),
            ("gamma_d", self.gamma_d),
            ("gamma_psf", self.gamma_psf),
        ] {
            if !(g > 0.0) {
                return err(name, "must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return err("lambda", "must lie in [0, 1]");
        }
        if !(self.r_collision < 0.0) {
            return err("r_collision", "must be negative");
        }
        if !(self.r_exists < 0.0) {
            return err("r_exists", "must be negative");
        }
        if !(self.u_max.norm() > 0.0) {
            return err("u_max", "must have positive norm");
        }
        Ok(())
    }
}

/// Reward components of one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RewardComponents {
    pub r_path: f64,
    pub r_colav: f64,
    pub r_psf: f64,
}

pub fn reward_path(u: f64, psi_bar: f64, eps: f64, cfg: &RewardConfig) -> f64 {
    let g = cfg.gamma_r;
    ((u / cfg.u_ref) * psi_bar.cos() + g) * ((-cfg.gamma_eps * eps.abs()).exp() + g) - g * g
}

/// Angle-weighted mean of exp(−γ_d d) over the beams, negated.
pub fn reward_colav(scan: &LidarScan, cfg: &RewardConfig) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for beam in &scan.beams {
        let w = 1.0 / (1.0 + cfg.gamma_theta * beam.angle.abs());
        num += w * (-cfg.gamma_d * scan.effective_range(beam)).exp();
        den += w;
    }
    if den > 0.0 {
        -num / den
    } else {
        0.0
    }
}

pub fn reward_psf(u_l: &ControlInput, u_0: &ControlInput, cfg: &RewardConfig) -> f64 {
    -cfg.gamma_psf * (*u_l - *u_0).norm() / cfg.u_max.norm()
}

pub fn reward_total(c: &RewardComponents, collision: bool, cfg: &RewardConfig) -> f64 {
    if collision {
        cfg.r_collision
    } else {
        cfg.lambda * c.r_path + (1.0 - cfg.lambda) * c.r_colav + c.r_psf + cfg.r_exists
    }
}

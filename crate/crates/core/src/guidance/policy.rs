use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::path::PathSpec;
use crate::angle::angle_diff;
use crate::rng::{stream_rng, Stream};
use crate::vessel::{ControlInput, VesselParams, VesselState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    LosFollow,
    ConstantAhead,
    Random,
    AdversarialTowardNearestObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionSource {
    Scripted,
    Random,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub u_l: ControlInput,
    pub source: ActionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Surge speed held by the scripted policies [m/s].
    pub cruise_speed: f64,
    /// LOS lookahead distance [m].
    pub lookahead: f64,
    pub heading_gain: f64,
    pub yaw_damping: f64,
    /// Surge speed error gain [N s/m].
    pub speed_gain: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 0.8,
            lookahead: 10.0,
            heading_gain: 1.0,
            yaw_damping: 2.0,
            speed_gain: 2.0,
        }
    }
}

/// Scripted stand-in for the learning controller.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    cfg: PolicyConfig,
    rng: ChaCha8Rng,
}

impl Policy {
    pub fn new(kind: PolicyKind, cfg: PolicyConfig, seed: u64) -> Self {
        Self {
            kind,
            cfg,
            rng: stream_rng(seed, Stream::Policy),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Surge thrust: drag feed-forward at the cruise speed plus a
    /// proportional correction.
    fn surge(&self, state: &VesselState, params: &VesselParams) -> f64 {
        let u = self.cfg.cruise_speed;
        let drag = (params.damping_linear()[0] + params.damping_quadratic()[0] * u.abs()) * u;
        drag + self.cfg.speed_gain * (u - state.u)
    }

    fn steer(&self, state: &VesselState, desired: f64) -> f64 {
        self.cfg.heading_gain * angle_diff(desired, state.psi) - self.cfg.yaw_damping * state.r
    }

    /// `obstacles` are the positions the policy may react to; only the
    /// adversarial policy uses them.
    pub fn act(
        &mut self,
        state: &VesselState,
        path: &PathSpec,
        obstacles: &[[f64; 2]],
        params: &VesselParams,
    ) -> PolicyAction {
        let (lo, hi) = (params.input_lower(), params.input_upper());
        let (u, source) = match self.kind {
            PolicyKind::LosFollow => {
                let proj = path.project(state.position());
                let target = path.point_at(proj.s + self.cfg.lookahead);
                let desired = if (target[0] - state.x).hypot(target[1] - state.y) > 1e-9 {
                    (target[1] - state.y).atan2(target[0] - state.x)
                } else {
                    proj.bearing
                };
                let tau =
                    ControlInput::new(self.surge(state, params), 0.0, self.steer(state, desired));
                (tau, ActionSource::Scripted)
            }
            PolicyKind::ConstantAhead => (
                ControlInput::new(self.surge(state, params), 0.0, 0.0),
                ActionSource::Scripted,
            ),
            PolicyKind::Random => {
                let tau = ControlInput::new(
                    self.rng.random_range(lo.tau_u..=hi.tau_u),
                    self.rng.random_range(lo.tau_v..=hi.tau_v),
                    self.rng.random_range(lo.tau_r..=hi.tau_r),
                );
                (tau, ActionSource::Random)
            }
            PolicyKind::AdversarialTowardNearestObstacle => {
                let nearest = obstacles.iter().min_by(|a, b| {
                    let da = (a[0] - state.x).hypot(a[1] - state.y);
                    let db = (b[0] - state.x).hypot(b[1] - state.y);
                    da.total_cmp(&db)
                });
                let desired = nearest.map_or(state.psi, |o| (o[1] - state.y).atan2(o[0] - state.x));
                let tau =
                    ControlInput::new(self.surge(state, params), 0.0, self.steer(state, desired));
                (tau, ActionSource::Scripted)
            }
        };
        PolicyAction {
            u_l: u.clamped(lo, hi),
            source,
        }
    }
}

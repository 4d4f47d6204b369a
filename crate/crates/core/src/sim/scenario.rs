use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{PathSpec, PolicyConfig, RewardConfig};
use crate::perception::LidarConfig;
use crate::rng::{stream_rng, Stream};
use crate::safety::PsfConfig;
use crate::tracking::TrackManagerConfig;
use crate::vessel::{Disturbance, VesselParams, VesselParamsConfig, VesselState};

pub const SCENARIO_SCHEMA: &str = "seaguard-scenario/1";

/// Scripted disc obstacle. Moves with constant velocity, or along a circle
/// when `turn_rate` is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleScript {
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    pub radius: f64,
    /// Heading rate of the velocity vector [rad/s].
    #[serde(default)]
    pub turn_rate: f64,
    /// Broadcasts AIS under this identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ais_id: Option<u32>,
}

impl ObstacleScript {
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let [p0, p1] = self.position;
        let [v0, v1] = self.velocity;
        let w = self.turn_rate;
        if w.abs() < 1e-12 {
            return [p0 + v0 * t, p1 + v1 * t];
        }
        let (s, c) = (w * t).sin_cos();
        [
            p0 + (s * v0 - (1.0 - c) * v1) / w,
            p1 + ((1.0 - c) * v0 + s * v1) / w,
        ]
    }

    pub fn velocity_at(&self, t: f64) -> [f64; 2] {
        let (s, c) = (self.turn_rate * t).sin_cos();
        let [v0, v1] = self.velocity;
        [c * v0 - s * v1, s * v0 + c * v1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    /// Dynamics and filter period [s].
    pub dt: f64,
    pub lidar_period: f64,
    pub ais_period: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            lidar_period: 1.0,
            ais_period: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub lidar: LidarConfig,
    /// Single-linkage distance for clustering hits [m].
    pub cluster_eps: f64,
    /// Standard deviation of AIS position reports [m].
    pub ais_position_sigma: f64,
    pub tracking: TrackManagerConfig,
    /// Obstacle radius assumed for tracks without an ellipse fit [m].
    pub default_track_radius: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            lidar: LidarConfig::default(),
            cluster_eps: 2.0,
            ais_position_sigma: 5.0,
            tracking: TrackManagerConfig::default(),
            default_track_radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default = "default_vessel_radius")]
    vessel_radius: f64,
    #[serde(default)]
    vessel: VesselParamsConfig,
    #[serde(default)]
    initial_state: VesselState,
    #[serde(default = "empty_path")]
    path: RawPath,
    #[serde(default)]
    obstacles: Vec<ObstacleScript>,
    /// Constant environmental force [N, N, N·m].
    #[serde(default)]
    disturbance: [f64; 3],
    #[serde(default)]
    timing: TimingConfig,
    #[serde(default)]
    sensors: SensorConfig,
    #[serde(default)]
    psf: PsfConfig,
    #[serde(default)]
    reward: RewardConfig,
    #[serde(default)]
    policy: PolicyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    #[serde(default)]
    waypoints: Vec<[f64; 2]>,
}

fn default_duration() -> f64 {
    60.0
}

fn default_vessel_radius() -> f64 {
    3.0
}

fn empty_path() -> RawPath {
    RawPath {
        waypoints: Vec::new(),
    }
}

/// A validated episode description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration: f64,
    pub vessel_radius: f64,
    pub vessel: VesselParams,
    pub initial_state: VesselState,
    pub path: PathSpec,
    pub obstacles: Vec<ObstacleScript>,
    pub disturbance: Disturbance,
    pub timing: TimingConfig,
    pub sensors: SensorConfig,
    pub psf: PsfConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
}

fn check(ok: bool, field: impl Into<String>, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(field, msg))
    }
}

fn is_multiple(period: f64, dt: f64) -> bool {
    let n = (period / dt).round();
    n >= 1.0 && (n * dt - period).abs() <= 1e-9 * period.max(1.0)
}

impl Scenario {
    fn from_raw(raw: RawScenario) -> Result<Self> {
        check(
            raw.schema == SCENARIO_SCHEMA,
            "schema",
            &format!("expected \"{SCENARIO_SCHEMA}\""),
        )?;
        check(
            raw.duration > 0.0 && raw.duration.is_finite(),
            "duration",
            "must be positive",
        )?;
        check(
            raw.vessel_radius >= 0.0 && raw.vessel_radius.is_finite(),
            "vessel_radius",
            "must be non-negative",
        )?;
        let vessel = VesselParams::from_config(&raw.vessel)?;
        check(
            raw.initial_state.is_finite(),
            "initial_state",
            "must be finite",
        )?;
        let path = PathSpec::new(raw.path.waypoints)?;
        for (i, o) in raw.obstacles.iter().enumerate() {
            let finite = o.position.iter().chain(&o.velocity).all(|v| v.is_finite())
                && o.turn_rate.is_finite();
            check(finite, format!("obstacles[{i}]"), "values must be finite")?;
            check(
                o.radius > 0.0 && o.radius.is_finite(),
                format!("obstacles[{i}].radius"),
                "must be positive",
            )?;
        }
        check(
            raw.disturbance.iter().all(|v| v.is_finite()),
            "disturbance",
            "must be finite",
        )?;
        let t = raw.timing;
        check(
            t.dt > 0.0 && t.dt.is_finite(),
            "timing.dt",
            "must be positive",
        )?;
        check(
            is_multiple(t.lidar_period, t.dt),
            "timing.lidar_period",
            "must be a positive multiple of timing.dt",
        )?;
        check(
            is_multiple(t.ais_period, t.dt),
            "timing.ais_period",
            "must be a positive multiple of timing.dt",
        )?;
        raw.sensors.lidar.validate()?;
        check(
            raw.sensors.cluster_eps > 0.0,
            "sensors.cluster_eps",
            "must be positive",
        )?;
        check(
            raw.sensors.ais_position_sigma >= 0.0,
            "sensors.ais_position_sigma",
            "must be non-negative",
        )?;
        check(
            raw.sensors.default_track_radius > 0.0,
            "sensors.default_track_radius",
            "must be positive",
        )?;
        raw.psf.validate()?;
        raw.reward.validate()?;
        let p = raw.policy;
        check(
            p.cruise_speed.is_finite(),
            "policy.cruise_speed",
            "must be finite",
        )?;
        check(p.lookahead > 0.0, "policy.lookahead", "must be positive")?;
        Ok(Scenario {
            seed: raw.seed,
            duration: raw.duration,
            vessel_radius: raw.vessel_radius,
            vessel,
            initial_state: raw.initial_state,
            path,
            obstacles: raw.obstacles,
            disturbance: Disturbance::new(
                raw.disturbance[0],
                raw.disturbance[1],
                raw.disturbance[2],
            ),
            timing: raw.timing,
            sensors: raw.sensors,
            psf: raw.psf,
            reward: raw.reward,
            policy: raw.policy,
        })
    }

    fn to_raw(&self) -> RawScenario {
        RawScenario {
            schema: SCENARIO_SCHEMA.to_string(),
            seed: self.seed,
            duration: self.duration,
            vessel_radius: self.vessel_radius,
            vessel: self.vessel.to_config(),
            initial_state: self.initial_state,
            path: RawPath {
                waypoints: self.path.waypoints().to_vec(),
            },
            obstacles: self.obstacles.clone(),
            disturbance: self.disturbance.to_vector().into(),
            timing: self.timing,
            sensors: self.sensors,
            psf: self.psf,
            reward: self.reward,
            policy: self.policy,
        }
    }

    /// Parses scenario TOML; `origin` names the source in errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: format!("{}: {}", e.path(), e.inner()),
        })?;
        Self::from_raw(raw)
    }

    /// Canonical TOML with every default written out.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_raw()).expect("scenario serialises")
    }

    pub fn disturbance(&self) -> Disturbance {
        self.disturbance
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_toml_str(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Static,
    Crossing,
    HeadOn,
    Mixed,
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Difficulty::Static),
            "crossing" => Ok(Difficulty::Crossing),
            "head-on" | "head_on" => Ok(Difficulty::HeadOn),
            "mixed" => Ok(Difficulty::Mixed),
            _ => Err(Error::validation(
                "difficulty",
                "expected static, crossing, head-on or mixed",
            )),
        }
    }
}

impl Difficulty {
    /// Largest obstacle speed generated [m/s].
    pub fn speed_cap(self) -> f64 {
        match self {
            Difficulty::Static => 0.0,
            _ => 1.0,
        }
    }
}

/// Smallest clearance d(p, O) − r over all obstacles at t = 0.
pub fn initial_min_margin(s: &Scenario) -> f64 {
    let p = s.initial_state.position();
    s.obstacles
        .iter()
        .map(|o| (o.position[0] - p[0]).hypot(o.position[1] - p[1]) - o.radius)
        .fold(f64::INFINITY, f64::min)
}

const GEN_RETRIES: usize = 1000;

/// Seeded random scenario: a gently bending 300 m path and 1 to 8 obstacles
/// placed where the vessel will be during the episode.
pub fn generate_random_scenario(seed: u64, difficulty: Difficulty) -> Scenario {
    let mut rng = stream_rng(seed, Stream::ScenarioGen);
    let psf = PsfConfig::default();
    let min_margin = psf.d_safe + psf.d_f;
    let heading: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let (sh, ch) = heading.sin_cos();
    let to_world = |along: f64, across: f64| [along * ch - across * sh, along * sh + across * ch];
    let bend: f64 = rng.random_range(-30.0..30.0);
    let waypoints = vec![
        to_world(0.0, 0.0),
        to_world(150.0, bend),
        to_world(300.0, 0.0),
    ];
    let path = PathSpec::new(waypoints).expect("generated path is valid");
    let initial_state = VesselState::new(0.0, 0.0, heading, 0.5, 0.0, 0.0);
    let duration = 60.0;
    let along_speed = 0.8;

    let count = rng.random_range(1..=8);
    let mut obstacles = Vec::with_capacity(count);
    let mut next_ais = 1;
    for _ in 0..count {
        let kind = match difficulty {
            Difficulty::Mixed => [Difficulty::Static, Difficulty::Crossing, Difficulty::HeadOn]
                [rng.random_range(0..3)],
            d => d,
        };
        let mut chosen = None;
        for _ in 0..GEN_RETRIES {
            let radius = rng.random_range(2.0..6.0);
            // Meeting point along the expected route and meeting time.
            let t_meet = rng.random_range(10.0..duration);
            let meet_along = along_speed * t_meet;
            let meet_across = rng.random_range(-10.0..10.0);
            let speed = rng.random_range(0.3..=difficulty.speed_cap().max(0.3));
            let (position, velocity) = match kind {
                Difficulty::Static => (
                    to_world(rng.random_range(30.0..80.0), rng.random_range(-15.0..15.0)),
                    [0.0, 0.0],
                ),
                Difficulty::Crossing => {
                    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    let v_local = [0.0, -side * speed];
                    let start = (meet_along, meet_across + side * speed * t_meet);
                    (to_world(start.0, start.1), to_world(v_local[0], v_local[1]))
                }
                _ => {
                    let start = (meet_along + speed * t_meet, meet_across);
                    (to_world(start.0, start.1), to_world(-speed, 0.0))
                }
            };
            let o = ObstacleScript {
                position,
                velocity,
                radius,
                turn_rate: 0.0,
                ais_id: None,
            };
            let margin = (o.position[0]).hypot(o.position[1]) - o.radius;
            if margin >= min_margin {
                chosen = Some(o);
                break;
            }
        }
        if let Some(mut o) = chosen {
            if kind != Difficulty::Static && rng.random_bool(0.5) {
                o.ais_id = Some(next_ais);
                next_ais += 1;
            }
            obstacles.push(o);
        }
    }

    let vessel = VesselParams::default();
    let reward = RewardConfig {
        u_max: vessel.input_max(),
        ..RewardConfig::default()
    };
    Scenario {
        seed,
        duration,
        vessel_radius: default_vessel_radius(),
        vessel,
        initial_state,
        path,
        obstacles,
        disturbance: Disturbance::zero(),
        timing: TimingConfig::default(),
        sensors: SensorConfig::default(),
        psf,
        reward,
        policy: PolicyConfig::default(),
    }
}

use std::collections::BTreeMap;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scenario::Scenario;
use super::trace::{
    EpisodeSummary, EpisodeTrace, EstimateRecord, ObstacleInfoMode, ObstacleRecord, PsfRecord,
    TickRecord, TraceHeader, TRACE_SCHEMA,
};
use crate::error::Result;
use crate::guidance::{
    cross_track_error, heading_error, reward_colav, reward_path, reward_psf, reward_total, Policy,
    PolicyKind, RewardComponents,
};
use crate::perception::{
    cluster_points, ellipse_to_measurement, fit_ellipse_stable, simulate_scan, LidarNoiseModel,
    LidarScan, SensorPose, Shape,
};
use crate::rng::{stream_rng, Stream};
use crate::safety::{
    build_terminal_set, safety_margin_report, ObstacleForecast, ObstaclePrediction, SafetyFilter,
    TerminalSet,
};
use crate::tracking::{kf_predict, AisMessage, Measurement, Track, TrackBelief, TrackManager};
use crate::vessel::{step_rk4, VesselState};

/// Largest distance at which a confirmed track is reported as the estimate
/// of a scripted obstacle [m].
const ASSOCIATION_DISTANCE: f64 = 10.0;

/// Bounds on the obstacle radius inferred from an ellipse fit [m].
const FIT_RADIUS_RANGE: (f64, f64) = (0.5, 15.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub policy: PolicyKind,
    pub psf_enabled: bool,
    pub info_mode: ObstacleInfoMode,
}

fn ticks_per(period: f64, dt: f64) -> u64 {
    ((period / dt).round() as u64).max(1)
}

fn estimate_record(b: &TrackBelief, radius: f64) -> EstimateRecord {
    let mut cov = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            cov[4 * r + c] = b.cov[(r, c)];
        }
    }
    EstimateRecord {
        track_id: b.track_id,
        mean: [b.mean[0], b.mean[1], b.mean[2], b.mean[3]],
        cov,
        radius,
    }
}

struct Sensors {
    lidar_rng: ChaCha8Rng,
    ais_rng: ChaCha8Rng,
    tracker: TrackManager,
    /// Radius inferred for each track from its latest ellipse fit.
    radii: BTreeMap<u64, f64>,
    noise_model: LidarNoiseModel,
    last_scan: Option<LidarScan>,
}

impl Sensors {
    fn lidar(
        &mut self,
        s: &Scenario,
        t: f64,
        state: &VesselState,
        shapes: &[Shape],
    ) -> Vec<(Measurement, f64)> {
        let pose = SensorPose {
            x: state.x,
            y: state.y,
            psi: state.psi,
        };
        let scan = simulate_scan(t, pose, shapes, &s.sensors.lidar, &mut self.lidar_rng);
        let clusters = cluster_points(&scan, s.sensors.cluster_eps);
        let fits = clusters
            .clusters
            .iter()
            .filter_map(|c| fit_ellipse_stable(c).ok())
            .map(|e| {
                let r = e.semi_axes[0].clamp(FIT_RADIUS_RANGE.0, FIT_RADIUS_RANGE.1);
                (ellipse_to_measurement(&e, t, &self.noise_model), r)
            })
            .collect();
        self.last_scan = Some(scan);
        fits
    }

    fn ais(&mut self, s: &Scenario, t: f64) -> Vec<AisMessage> {
        let sigma = s.sensors.ais_position_sigma;
        let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).unwrap());
        s.obstacles
            .iter()
            .filter_map(|o| {
                let id = o.ais_id?;
                let p = o.position_at(t);
                let v = o.velocity_at(t);
                let (nx, ny) = match &noise {
                    Some(d) => (d.sample(&mut self.ais_rng), d.sample(&mut self.ais_rng)),
                    None => (0.0, 0.0),
                };
                Some(AisMessage {
                    stamp: t,
                    vessel_id: id,
                    x: p[0] + nx,
                    y: p[1] + ny,
                    speed: v[0].hypot(v[1]),
                    course: v[1].atan2(v[0]),
                })
            })
            .collect()
    }

    fn radius_of(&self, s: &Scenario, tr: &Track) -> f64 {
        self.radii
            .get(&tr.id())
            .copied()
            .unwrap_or(s.sensors.default_track_radius)
    }

    /// Confirmed beliefs predicted to `t`.
    fn confirmed_at(&self, s: &Scenario, t: f64) -> Vec<(TrackBelief, f64)> {
        let noise = s.sensors.tracking.noise;
        self.tracker
            .confirmed()
            .map(|tr| {
                let dt = (t - tr.belief.last_update).max(0.0);
                (kf_predict(&tr.belief, dt, &noise), self.radius_of(s, tr))
            })
            .collect()
    }
}

/// Runs one closed-loop episode and builds the terminal set for it.
pub fn run_episode(s: &Scenario, opts: &EpisodeOptions) -> Result<(EpisodeTrace, EpisodeSummary)> {
    let terminal = if opts.psf_enabled {
        Some(build_terminal_set(&s.vessel, s.psf.dt, &s.psf.terminal)?)
    } else {
        None
    };
    run_episode_with_terminal(s, opts, terminal.as_ref())
}

/// Runs one episode with a precomputed terminal set (required when the
/// filter is enabled, ignored otherwise).
pub fn run_episode_with_terminal(
    s: &Scenario,
    opts: &EpisodeOptions,
    terminal: Option<&TerminalSet>,
) -> Result<(EpisodeTrace, EpisodeSummary)> {
    let dt = s.timing.dt;
    let n_ticks = ticks_per(s.duration, dt);
    let lidar_every = ticks_per(s.timing.lidar_period, dt);
    let ais_every = ticks_per(s.timing.ais_period, dt);
    let params = &s.vessel;
    let dist = s.disturbance();
    let d_safe = s.psf.d_safe;

    let mut filter = match (opts.psf_enabled, terminal) {
        (true, Some(t)) => Some(SafetyFilter::with_terminal(
            params.clone(),
            s.psf,
            t.clone(),
        )?),
        (true, None) => Some(SafetyFilter::new(params.clone(), s.psf)?),
        _ => None,
    };
    let mut policy = Policy::new(opts.policy, s.policy, s.seed);
    let mut sensors = Sensors {
        lidar_rng: stream_rng(s.seed, Stream::Lidar),
        ais_rng: stream_rng(s.seed, Stream::Ais),
        tracker: TrackManager::new(s.sensors.tracking),
        radii: BTreeMap::new(),
        noise_model: LidarNoiseModel::default(),
        last_scan: None,
    };

    let header = TraceHeader {
        schema: TRACE_SCHEMA.to_string(),
        seed: s.seed,
        policy: opts.policy,
        psf_enabled: opts.psf_enabled,
        info_mode: opts.info_mode,
        dt,
        psf_horizon: s.psf.horizon,
        psf_dt: s.psf.dt,
        d_safe,
        process_noise: s.sensors.tracking.noise.q,
        inflation_sigmas: s.psf.inflation_sigmas,
        vessel_radius: s.vessel_radius,
        obstacle_radii: s.obstacles.iter().map(|o| o.radius).collect(),
        u_max_norm: s.reward.u_max.norm(),
    };
    let mut ticks = Vec::with_capacity(n_ticks as usize);
    let mut aborted = None;
    let mut solve_time = Duration::ZERO;
    let mut solves = 0u32;
    let mut state = s.initial_state;

    for tick in 0..n_ticks {
        let t = tick as f64 * dt;
        let truth: Vec<([f64; 2], [f64; 2])> = s
            .obstacles
            .iter()
            .map(|o| (o.position_at(t), o.velocity_at(t)))
            .collect();

        // Sensors and tracking.
        let mut lidar = Vec::new();
        if tick % lidar_every == 0 {
            let shapes: Vec<Shape> = s
                .obstacles
                .iter()
                .zip(&truth)
                .map(|(o, (p, _))| Shape::circle(*p, o.radius))
                .collect();
            lidar = sensors.lidar(s, t, &state, &shapes);
        }
        let ais = if tick % ais_every == 0 {
            sensors.ais(s, t)
        } else {
            Vec::new()
        };
        if !lidar.is_empty() || !ais.is_empty() {
            let measurements: Vec<Measurement> = lidar.iter().map(|(m, _)| *m).collect();
            if let Err(e) = sensors.tracker.step(t, &measurements, &ais) {
                aborted = Some(format!("tracking failed at t = {t}: {e}"));
                break;
            }
            for tr in sensors.tracker.tracks() {
                let p = tr.belief.position();
                let nearest = lidar
                    .iter()
                    .map(|(m, r)| ((m.z - p).norm(), *r))
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((d, r)) = nearest {
                    if d < ASSOCIATION_DISTANCE {
                        sensors.radii.insert(tr.id(), r);
                    }
                }
            }
            let live: Vec<u64> = sensors.tracker.tracks().iter().map(Track::id).collect();
            sensors.radii.retain(|id, _| live.contains(id));
        }
        let beliefs = sensors.confirmed_at(s, t);

        // Forecast for the filter.
        let forecast = match opts.info_mode {
            ObstacleInfoMode::GroundTruth => ObstacleForecast::new(
                s.obstacles
                    .iter()
                    .zip(&truth)
                    .map(|(o, (p, v))| {
                        ObstaclePrediction::constant_velocity(
                            *p,
                            *v,
                            o.radius,
                            s.psf.horizon,
                            s.psf.dt,
                        )
                    })
                    .collect(),
            ),
            ObstacleInfoMode::Tracked => ObstacleForecast::new(
                beliefs
                    .iter()
                    .map(|(b, r)| {
                        ObstaclePrediction::from_belief(
                            b,
                            *r,
                            s.psf.horizon,
                            s.psf.dt,
                            &s.sensors.tracking.noise,
                            s.psf.inflation_sigmas,
                        )
                    })
                    .collect(),
            ),
            ObstacleInfoMode::None => ObstacleForecast::default(),
        };

        // Policy and filter.
        let positions: Vec<[f64; 2]> = truth.iter().map(|(p, _)| *p).collect();
        let action = policy.act(&state, &s.path, &positions, params);
        let u_l = action.u_l;
        let (u_0, psf) = match filter.as_mut() {
            Some(f) => {
                let sol = f.filter(t, &state, &u_l, &forecast, &dist);
                solve_time += sol.solve_time;
                solves += 1;
                let report = safety_margin_report(&sol.x_seq, &forecast, d_safe);
                let record = PsfRecord {
                    status: sol.status,
                    iterations: sol.iterations,
                    cost: sol.cost,
                    max_violation: sol.max_violation,
                    slack_total: sol.slack_total,
                    plan: sol.x_seq.iter().map(|x| x.position()).collect(),
                    plan_first_violation: report.first_violation,
                };
                (sol.u0(), Some(record))
            }
            None => (u_l, None),
        };

        // Plant.
        let next = match step_rk4(&state, &u_0, &dist, params, dt) {
            Ok(x) => x,
            Err(e) => {
                aborted = Some(format!("integration failed at t = {t}: {e}"));
                break;
            }
        };
        let t_next = t + dt;
        let collision = s.obstacles.iter().any(|o| {
            let p = o.position_at(t_next);
            (p[0] - next.x).hypot(p[1] - next.y) < o.radius + s.vessel_radius
        });

        // Logging and rewards, evaluated at the state entering the tick.
        let clearance = s
            .obstacles
            .iter()
            .zip(&truth)
            .map(|(o, (p, _))| (p[0] - state.x).hypot(p[1] - state.y) - o.radius)
            .reduce(f64::min);
        let cte = cross_track_error(&s.path, state.position());
        let psi_bar = heading_error(&s.path, &state);
        let r_colav = sensors
            .last_scan
            .as_ref()
            .map_or(0.0, |scan| reward_colav(scan, &s.reward));
        let rewards = RewardComponents {
            r_path: reward_path(state.u, psi_bar, cte, &s.reward),
            r_colav,
            r_psf: reward_psf(&u_l, &u_0, &s.reward),
        };
        let mut used = vec![false; beliefs.len()];
        let obstacles = truth
            .iter()
            .map(|(p, v)| {
                let nearest = beliefs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !used[*i])
                    .map(|(i, (b, _))| (i, (b.mean[0] - p[0]).hypot(b.mean[1] - p[1])))
                    .filter(|(_, d)| *d < ASSOCIATION_DISTANCE)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                let estimate = nearest.map(|(i, _)| {
                    used[i] = true;
                    estimate_record(&beliefs[i].0, beliefs[i].1)
                });
                ObstacleRecord {
                    position: *p,
                    velocity: *v,
                    estimate,
                }
            })
            .collect();
        let extra_tracks = beliefs
            .iter()
            .zip(&used)
            .filter(|(_, u)| !**u)
            .map(|((b, r), _)| estimate_record(b, *r))
            .collect();
        ticks.push(TickRecord {
            tick,
            time: t,
            state,
            u_l,
            u_0,
            delta_u: u_l - u_0,
            psf,
            obstacles,
            extra_tracks,
            margin: clearance.map(|c| c - d_safe),
            clearance,
            cross_track: cte,
            heading_error: psi_bar,
            rewards,
            r_total: reward_total(&rewards, collision, &s.reward),
            collision,
        });
        state = next;
        if collision {
            break;
        }
    }

    let trace = EpisodeTrace {
        header,
        ticks,
        aborted,
    };
    let mean_ms = if solves > 0 {
        solve_time.as_secs_f64() * 1e3 / solves as f64
    } else {
        0.0
    };
    let summary = EpisodeSummary::from_trace(&trace, mean_ms);
    Ok((trace, summary))
}

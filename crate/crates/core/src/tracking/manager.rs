use nalgebra::{Matrix2, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::ais::AisMessage;
use super::kalman::{
    fuse_gaussian_product, kf_predict, Measurement, NoiseModel, SensorSource, TrackBelief,
    MEASUREMENT_MATRIX,
};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackManagerConfig {
    /// Squared Mahalanobis gate (χ²₂ at 99%).
    pub gate: f64,
    pub confirm_hits: u32,
    /// Coast time after which an unobserved track is dropped [s].
    pub coast_timeout: f64,
    /// Coast time for tracks linked to an AIS identity [s].
    pub ais_coast_timeout: f64,
    pub noise: NoiseModel,
    /// Diagonal AIS position variance [m²].
    pub ais_variance: f64,
    /// Initial velocity variance of a new track [m²/s²].
    pub initial_velocity_variance: f64,
}

impl Default for TrackManagerConfig {
    fn default() -> Self {
        Self {
            gate: 9.21,
            confirm_hits: 3,
            coast_timeout: 5.0,
            ais_coast_timeout: 90.0,
            noise: NoiseModel::default(),
            ais_variance: 25.0,
            initial_velocity_variance: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub belief: TrackBelief,
    pub hits: u32,
    pub confirmed: bool,
    pub last_seen: f64,
    pub ais_id: Option<u32>,
}

impl Track {
    pub fn id(&self) -> u64 {
        self.belief.track_id
    }
}

/// Single-writer multi-target tracker: greedy nearest-neighbour association
/// inside a Mahalanobis gate, AIS identity matching, M-hit confirmation and
/// timeout-based deletion.
#[derive(Debug, Clone, Default)]
pub struct TrackManager {
    cfg: TrackManagerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

fn mahalanobis2(b: &TrackBelief, m: &Measurement) -> f64 {
    let h = MEASUREMENT_MATRIX;
    let s = h * b.cov * h.transpose() + m.r;
    let y = m.z - h * b.mean;
    match s.try_inverse() {
        Some(si) => (y.transpose() * si * y)[0],
        None => f64::INFINITY,
    }
}

impl TrackManager {
    pub fn new(cfg: TrackManagerConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    pub fn config(&self) -> &TrackManagerConfig {
        &self.cfg
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.confirmed)
    }

    fn ais_measurement(&self, msg: &AisMessage, t: f64) -> Measurement {
        Measurement {
            source: SensorSource::Ais,
            z: msg.position_at(t),
            r: Matrix2::identity() * self.cfg.ais_variance,
            stamp: t,
            vessel_id: Some(msg.vessel_id),
        }
    }

    fn spawn(&mut self, m: &Measurement, velocity: [f64; 2], t: f64, confirmed: bool) {
        let mut cov = Matrix4::identity() * self.cfg.initial_velocity_variance;
        cov.fixed_view_mut::<2, 2>(0, 0).copy_from(&m.r);
        let mean = Vector4::new(m.z[0], m.z[1], velocity[0], velocity[1]);
        self.tracks.push(Track {
            belief: TrackBelief::new(mean, cov, t, self.next_id),
            hits: 1,
            confirmed: confirmed || self.cfg.confirm_hits <= 1,
            last_seen: t,
            ais_id: m.vessel_id,
        });
        self.next_id += 1;
    }

    /// Advances every track to `t` and incorporates this tick's LiDAR
    /// measurements and AIS messages. AIS reports are dead-reckoned to `t`.
    pub fn step(&mut self, t: f64, lidar: &[Measurement], ais: &[AisMessage]) -> Result<()> {
        let noise = self.cfg.noise;
        for tr in &mut self.tracks {
            let dt = (t - tr.belief.last_update).max(0.0);
            tr.belief = kf_predict(&tr.belief, dt, &noise);
        }

        let n = self.tracks.len();
        let mut ais_for: Vec<Option<Measurement>> = vec![None; n];
        let mut new_ais: Vec<(Measurement, [f64; 2])> = Vec::new();
        for msg in ais {
            let m = self.ais_measurement(msg, t);
            let by_id = self
                .tracks
                .iter()
                .position(|tr| tr.ais_id == Some(msg.vessel_id));
            let idx = by_id.or_else(|| {
                (0..n)
                    .filter(|&i| self.tracks[i].ais_id.is_none() && ais_for[i].is_none())
                    .map(|i| (i, mahalanobis2(&self.tracks[i].belief, &m)))
                    .filter(|&(_, d)| d < self.cfg.gate)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            });
            match idx {
                Some(i) => {
                    self.tracks[i].ais_id = Some(msg.vessel_id);
                    ais_for[i] = Some(m);
                }
                None => {
                    let v = msg.velocity();
                    new_ais.push((m, [v[0], v[1]]));
                }
            }
        }

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (j, m) in lidar.iter().enumerate() {
            for (i, tr) in self.tracks.iter().enumerate() {
                let d = mahalanobis2(&tr.belief, m);
                if d < self.cfg.gate {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut lidar_for: Vec<Option<usize>> = vec![None; n];
        let mut used = vec![false; lidar.len()];
        for (_, i, j) in pairs {
            if lidar_for[i].is_none() && !used[j] {
                lidar_for[i] = Some(j);
                used[j] = true;
            }
        }

        for i in 0..n {
            let l = lidar_for[i].map(|j| &lidar[j]);
            let a = ais_for[i].as_ref();
            if l.is_none() && a.is_none() {
                continue;
            }
            let tr = &mut self.tracks[i];
            tr.belief = fuse_gaussian_product(&tr.belief, l, a)?;
            tr.hits += 1;
            tr.last_seen = t;
            if tr.hits >= self.cfg.confirm_hits || tr.ais_id.is_some() {
                tr.confirmed = true;
            }
        }

        for (m, v) in new_ais {
            self.spawn(&m, v, t, true);
        }
        for (j, m) in lidar.iter().enumerate() {
            if !used[j] {
                self.spawn(m, [0.0, 0.0], t, false);
            }
        }

        let cfg = self.cfg;
        self.tracks.retain(|tr| {
            let timeout = if tr.ais_id.is_some() {
                cfg.coast_timeout.max(cfg.ais_coast_timeout)
            } else {
                cfg.coast_timeout
            };
            t - tr.last_seen <= timeout
        });
        Ok(())
    }
}

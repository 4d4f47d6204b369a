use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    pub beam_count: usize,
    /// Field of view [rad], centred on the heading.
    pub fov: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beam_count: 120,
            fov: TAU,
            max_range: 100.0,
            noise_sigma: 0.1,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 1 {
            return Err(Error::validation("lidar.beam_count", "must be at least 1"));
        }
        if !(self.fov > 0.0 && self.fov <= TAU) {
            return Err(Error::validation("lidar.fov", "must lie in (0, 2π]"));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::validation("lidar.max_range", "must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::validation(
                "lidar.noise_sigma",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Beam angles relative to the heading, strictly increasing.
///
/// A full circle uses `-π + (i+1)·2π/n` so that both 0 and π are sampled for
/// even `n`; a partial fan spans `[-fov/2, fov/2]` inclusive.
pub fn beam_angles(cfg: &LidarConfig) -> Vec<f64> {
    let n = cfg.beam_count;
    if (cfg.fov - TAU).abs() < 1e-12 {
        (0..n)
            .map(|i| -PI + (i + 1) as f64 * TAU / n as f64)
            .collect()
    } else if n == 1 {
        vec![0.0]
    } else {
        let step = cfg.fov / (n - 1) as f64;
        (0..n).map(|i| -0.5 * cfg.fov + i as f64 * step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Obstacle outline in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Ellipse {
        center: [f64; 2],
        semi_axes: [f64; 2],
        orientation: f64,
    },
    Rectangle {
        center: [f64; 2],
        half_extents: [f64; 2],
        orientation: f64,
    },
}

impl Shape {
    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Shape::Ellipse {
            center,
            semi_axes: [radius, radius],
            orientation: 0.0,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Shape::Ellipse { center, .. } | Shape::Rectangle { center, .. } => center,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut out = *self;
        match &mut out {
            Shape::Ellipse { center, .. } | Shape::Rectangle { center, .. } => {
                center[0] += dx;
                center[1] += dy;
            }
        }
        out
    }

    /// Radius of the smallest centred disc containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Ellipse { semi_axes, .. } => semi_axes[0].max(semi_axes[1]),
            Shape::Rectangle { half_extents, .. } => half_extents[0].hypot(half_extents[1]),
        }
    }

    /// Smallest positive ray parameter at which `origin + t·dir` meets the
    /// outline. `dir` must be a unit vector.
    pub fn ray_intersection(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let (center, orientation) = match *self {
            Shape::Ellipse {
                center,
                orientation,
                ..
            }
            | Shape::Rectangle {
                center,
                orientation,
                ..
            } => (center, orientation),
        };
        let (s, c) = orientation.sin_cos();
        let ox = origin[0] - center[0];
        let oy = origin[1] - center[1];
        let lo = [c * ox + s * oy, -s * ox + c * oy];
        let ld = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1]];
        match *self {
            Shape::Ellipse { semi_axes, .. } => {
                let po = [lo[0] / semi_axes[0], lo[1] / semi_axes[1]];
                let pd = [ld[0] / semi_axes[0], ld[1] / semi_axes[1]];
                let qa = pd[0] * pd[0] + pd[1] * pd[1];
                let qb = 2.0 * (po[0] * pd[0] + po[1] * pd[1]);
                let qc = po[0] * po[0] + po[1] * po[1] - 1.0;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-qb - sq) / (2.0 * qa);
                let t1 = (-qb + sq) / (2.0 * qa);
                [t0, t1].into_iter().find(|&t| t > 1e-9)
            }
            Shape::Rectangle { half_extents, .. } => {
                // Slab test; from inside the box the exit face is returned.
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for k in 0..2 {
                    if ld[k].abs() < 1e-15 {
                        if lo[k].abs() > half_extents[k] {
                            return None;
                        }
                        continue;
                    }
                    let ta = (-half_extents[k] - lo[k]) / ld[k];
                    let tb = (half_extents[k] - lo[k]) / ld[k];
                    t_near = t_near.max(ta.min(tb));
                    t_far = t_far.min(ta.max(tb));
                }
                if t_near > t_far {
                    None
                } else if t_near > 1e-9 {
                    Some(t_near)
                } else if t_far > 1e-9 {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Angle relative to the sensor heading [rad].
    pub angle: f64,
    /// Measured range, `None` for a miss.
    pub range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarScan {
    pub time: f64,
    pub sensor_pose: SensorPose,
    pub beams: Vec<Beam>,
    pub max_range: f64,
    pub noise_sigma: f64,
}

impl LidarScan {
    /// World-frame hit points with the index of the beam that produced each.
    pub fn hit_points(&self) -> Vec<(usize, [f64; 2])> {
        let p = &self.sensor_pose;
        self.beams
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                b.range.map(|r| {
                    let a = p.psi + b.angle;
                    (i, [p.x + r * a.cos(), p.y + r * a.sin()])
                })
            })
            .collect()
    }

    /// Range used by the reward: misses count as `max_range`.
    pub fn effective_range(&self, beam: &Beam) -> f64 {
        beam.range.unwrap_or(self.max_range)
    }
}

/// Ray-casts every beam against the obstacle outlines; the nearest
/// intersection wins and Gaussian range noise is added to hits.
pub fn simulate_scan<R: Rng + ?Sized>(
    time: f64,
    pose: SensorPose,
    obstacles: &[Shape],
    cfg: &LidarConfig,
    rng: &mut R,
) -> LidarScan {
    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).unwrap());
    let origin = [pose.x, pose.y];
    let beams = beam_angles(cfg)
        .into_iter()
        .map(|angle| {
            let (s, c) = (pose.psi + angle).sin_cos();
            let hit = obstacles
                .iter()
                .filter_map(|o| o.ray_intersection(origin, [c, s]))
                .fold(None, |best: Option<f64>, t| {
                    Some(best.map_or(t, |b| b.min(t)))
                });
            let range = hit.filter(|&t| t <= cfg.max_range).map(|t| {
                let n = noise.as_ref().map_or(0.0, |d| d.sample(rng));
                (t + n).clamp(1e-6, cfg.max_range)
            });
            Beam { angle, range }
        })
        .collect();
    LidarScan {
        time,
        sensor_pose: pose,
        beams,
        max_range: cfg.max_range,
        noise_sigma: cfg.noise_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn default_angles_cover_circle_evenly() {
        let a = beam_angles(&LidarConfig::default());
        assert_eq!(a.len(), 120);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(a.iter().any(|&x| x.abs() < 1e-12));
        assert!((a[119] - PI).abs() < 1e-12);
        let step = TAU / 120.0;
        assert!(a.windows(2).all(|w| (w[1] - w[0] - step).abs() < 1e-12));
    }

    #[test]
    fn no_obstacles_all_miss() {
        let mut rng = stream_rng(0, Stream::Test);
        let scan = simulate_scan(
            0.0,
            SensorPose::default(),
            &[],
            &LidarConfig::default(),
            &mut rng,
        );
        assert!(scan.beams.iter().all(|b| b.range.is_none()));
    }

    #[test]
    fn circle_dead_ahead_gives_centre_minus_radius() {
        let cfg = LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Test);
        let scan = simulate_scan(
            0.0,
            SensorPose::default(),
            &[Shape::circle([50.0, 0.0], 5.0)],
            &cfg,
            &mut rng,
        );
        let centre = scan.beams.iter().find(|b| b.angle.abs() < 1e-12).unwrap();
        assert!((centre.range.unwrap() - 45.0).abs() < 1e-9);
    }

    #[test]
    fn heading_rotates_the_fan() {
        let cfg = LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Test);
        let pose = SensorPose {
            x: 0.0,
            y: 0.0,
            psi: std::f64::consts::FRAC_PI_2,
        };
        let scan = simulate_scan(
            0.0,
            pose,
            &[Shape::circle([0.0, 30.0], 4.0)],
            &cfg,
            &mut rng,
        );
        let centre = scan.beams.iter().find(|b| b.angle.abs() < 1e-12).unwrap();
        assert!((centre.range.unwrap() - 26.0).abs() < 1e-9);
    }

    #[test]
    fn rectangle_face_range() {
        let cfg = LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Test);
        let rect = Shape::Rectangle {
            center: [20.0, 0.0],
            half_extents: [3.0, 6.0],
            orientation: 0.0,
        };
        let scan = simulate_scan(0.0, SensorPose::default(), &[rect], &cfg, &mut rng);
        let centre = scan.beams.iter().find(|b| b.angle.abs() < 1e-12).unwrap();
        assert!((centre.range.unwrap() - 17.0).abs() < 1e-9);
    }

    #[test]
    fn nearest_obstacle_occludes() {
        let cfg = LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Test);
        let obstacles = [
            Shape::circle([60.0, 0.0], 5.0),
            Shape::circle([20.0, 0.0], 2.0),
        ];
        let scan = simulate_scan(0.0, SensorPose::default(), &obstacles, &cfg, &mut rng);
        let centre = scan.beams.iter().find(|b| b.angle.abs() < 1e-12).unwrap();
        assert!((centre.range.unwrap() - 18.0).abs() < 1e-9);
    }

    #[test]
    fn beyond_max_range_is_a_miss() {
        let cfg = LidarConfig {
            noise_sigma: 0.0,
            ..LidarConfig::default()
        };
        let mut rng = stream_rng(0, Stream::Test);
        let scan = simulate_scan(
            0.0,
            SensorPose::default(),
            &[Shape::circle([150.0, 0.0], 5.0)],
            &cfg,
            &mut rng,
        );
        assert!(scan.beams.iter().all(|b| b.range.is_none()));
    }

    #[test]
    fn seeded_scans_repeat() {
        let cfg = LidarConfig::default();
        let obstacles = [Shape::circle([15.0, 3.0], 4.0)];
        let a = simulate_scan(
            1.0,
            SensorPose::default(),
            &obstacles,
            &cfg,
            &mut stream_rng(7, Stream::Lidar),
        );
        let b = simulate_scan(
            1.0,
            SensorPose::default(),
            &obstacles,
            &cfg,
            &mut stream_rng(7, Stream::Lidar),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_hits_stay_near_the_outline() {
        let cfg = LidarConfig::default();
        let clean_cfg = LidarConfig {
            noise_sigma: 0.0,
            ..cfg
        };
        let mut rng = stream_rng(11, Stream::Test);
        let mut total = 0usize;
        let mut outside = 0usize;
        for k in 0..200 {
            let obstacles = [
                Shape::circle([10.0 + 0.1 * k as f64, 5.0], 4.0),
                Shape::Rectangle {
                    center: [-15.0, -8.0],
                    half_extents: [5.0, 2.0],
                    orientation: 0.01 * k as f64,
                },
            ];
            let noisy = simulate_scan(0.0, SensorPose::default(), &obstacles, &cfg, &mut rng);
            let clean = simulate_scan(0.0, SensorPose::default(), &obstacles, &clean_cfg, &mut rng);
            for (n, c) in noisy.beams.iter().zip(&clean.beams) {
                if let (Some(rn), Some(rc)) = (n.range, c.range) {
                    total += 1;
                    if (rn - rc).abs() > 4.0 * cfg.noise_sigma {
                        outside += 1;
                    }
                }
            }
        }
        assert!(total > 1000);
        assert!(
            (outside as f64) / (total as f64) <= 1e-3,
            "{outside}/{total}"
        );
    }
}

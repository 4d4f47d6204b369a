use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::tracking::{position_sigma, predict_horizon, NoiseModel, TrackBelief};

/// Predicted disc obstacle over the horizon, one entry per step k = 0..=N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePrediction {
    pub positions: Vec<[f64; 2]>,
    pub radius: f64,
    /// Extra radius per step from tracking uncertainty [m].
    pub inflation: Vec<f64>,
}

impl ObstaclePrediction {
    /// Constant-velocity prediction without uncertainty.
    pub fn constant_velocity(
        position: [f64; 2],
        velocity: [f64; 2],
        radius: f64,
        steps: usize,
        dt: f64,
    ) -> Self {
        let positions = (0..=steps)
            .map(|k| {
                let t = k as f64 * dt;
                [position[0] + velocity[0] * t, position[1] + velocity[1] * t]
            })
            .collect();
        Self {
            positions,
            radius,
            inflation: vec![0.0; steps + 1],
        }
    }

    /// Prediction from a track belief, inflated by `sigmas` positional
    /// standard deviations.
    pub fn from_belief(
        belief: &TrackBelief,
        radius: f64,
        steps: usize,
        dt: f64,
        noise: &NoiseModel,
        sigmas: f64,
    ) -> Self {
        let mut positions = vec![[belief.mean[0], belief.mean[1]]];
        let mut inflation = vec![sigmas * position_sigma(&belief.cov)];
        for (m, p) in predict_horizon(belief, steps, dt, noise) {
            positions.push([m[0], m[1]]);
            inflation.push(sigmas * position_sigma(&p));
        }
        Self {
            positions,
            radius,
            inflation,
        }
    }

    pub fn steps(&self) -> usize {
        self.positions.len().saturating_sub(1)
    }

    pub fn effective_radius(&self, k: usize) -> f64 {
        self.radius + self.inflation[k]
    }

    pub fn center(&self, k: usize) -> Vector2<f64> {
        Vector2::new(self.positions[k][0], self.positions[k][1])
    }
}

/// All obstacles known to the filter for one solve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObstacleForecast {
    pub obstacles: Vec<ObstaclePrediction>,
}

impl ObstacleForecast {
    pub fn new(obstacles: Vec<ObstaclePrediction>) -> Self {
        Self { obstacles }
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }
}

/// Centre distance minus radius; negative inside the disc.
pub fn distance_to_obstacle(p: [f64; 2], center: [f64; 2], radius: f64) -> f64 {
    (p[0] - center[0]).hypot(p[1] - center[1]) - radius
}

//! Predictive target tracking and predictive safety filtering for a 3-DOF
//! autonomous surface vessel.
//!
//! The crate is organised bottom-up:
//!
//! - [`vessel`]: nonlinear surge/sway/yaw model, RK4 integration, Jacobians.
//! - [`perception`]: synthetic 2-D LiDAR, point clustering, ellipse fitting.
//! - [`tracking`]: constant-velocity Kalman tracking and AIS/LiDAR fusion.
//! - [`safety`]: the predictive safety filter (multiple-shooting SQP) and its
//!   terminal velocity set.
//! - [`guidance`]: path geometry, reward terms and scripted policies.
//! - [`sim`]: scenarios, the closed-loop episode engine, traces and emitters.

pub mod angle;
pub mod error;
pub mod guidance;
pub mod perception;
pub mod rng;
pub mod safety;
pub mod sim;
pub mod tracking;
pub mod vessel;

pub use error::{Error, ErrorCategory, Result};

//! Constant-velocity Kalman tracking with asynchronous AIS/LiDAR fusion.

mod ais;
mod kalman;
mod manager;

pub use ais::{read_ais, write_ais, AisMessage};
pub use kalman::{
    cv_transition, fuse_gain_weighted, fuse_gaussian_product, kf_predict, kf_update,
    kf_update_with_gain, position_sigma, predict_horizon, KinematicState, Measurement, NoiseModel,
    SensorSource, TrackBelief, MEASUREMENT_MATRIX,
};
pub use manager::{Track, TrackManager, TrackManagerConfig};

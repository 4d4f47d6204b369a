//! Synthetic 2-D LiDAR, point clustering and ellipse fitting.

mod cluster;
mod dump;
mod ellipse;
mod lidar;

pub use cluster::{cluster_points, ClusterOutput, PointCluster, MIN_FIT_POINTS};
pub use dump::{
    read_point_groups, read_scan, write_fit_dump, write_points, write_scan, PointGroups,
};
pub use ellipse::{
    constraint_matrix, design_matrix, ellipse_to_measurement, fit_ellipse_mlr, fit_ellipse_stable,
    fit_ellipse_stable_with_diagnostics, EllipseParams, FitDiagnostics, LidarNoiseModel,
};
pub use lidar::{beam_angles, simulate_scan, Beam, LidarConfig, LidarScan, SensorPose, Shape};

//! Predictive safety filter.
mod filter;
mod obstacles;
mod qp;
mod terminal;

pub use filter::{
    dynamics_defect, filter_control, safety_margin_report, DisturbanceMode, MarginReport,
    OcpSolution, PsfConfig, PsfStatus, SafetyFilter, WarmStart,
};
pub use obstacles::{distance_to_obstacle, ObstacleForecast, ObstaclePrediction};
pub use terminal::{
    build_terminal_set, certify_terminal_set, solve_dare, solve_discrete_lyapunov, Certification,
    TerminalSet, TerminalSetConfig,
};

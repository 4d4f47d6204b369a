//! Scenario files, the closed-loop episode engine and its outputs.

mod batch;
mod episode;
mod plots;
mod scenario;
mod trace;

pub use batch::{run_batch, run_scenarios, BatchAggregate};
pub use episode::{run_episode, run_episode_with_terminal, EpisodeOptions};
pub use plots::{emit_plots, TUBE_STRIDE};
pub use scenario::{
    generate_random_scenario, initial_min_margin, load_scenario, Difficulty, ObstacleScript,
    Scenario, SensorConfig, TimingConfig, SCENARIO_SCHEMA,
};
pub use trace::{
    EpisodeSummary, EpisodeTrace, EstimateRecord, ObstacleInfoMode, ObstacleRecord, PsfRecord,
    TickRecord, TraceHeader, INTERVENTION_TOL, TRACE_SCHEMA,
};

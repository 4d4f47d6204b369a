use std::ops::Range;

use rayon::prelude::*;

use super::episode::{run_episode_with_terminal, EpisodeOptions};
use super::scenario::{generate_random_scenario, Difficulty, Scenario};
use super::trace::EpisodeSummary;
use crate::error::Result;
use crate::safety::{build_terminal_set, TerminalSet};

/// Totals over a batch of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAggregate {
    pub episodes: usize,
    pub episodes_with_collision: usize,
    pub total_collisions: usize,
    pub min_distance: Option<f64>,
    pub mean_abs_cte: f64,
    pub mean_cumulative_reward: f64,
    pub mean_intervention_rate: f64,
    pub relaxed_ticks: usize,
    pub infeasible_ticks: usize,
    pub mean_solve_time_ms: f64,
    pub aborted: usize,
}

impl BatchAggregate {
    pub fn from_summaries(rows: &[EpisodeSummary]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&EpisodeSummary) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: rows.len(),
            episodes_with_collision: rows.iter().filter(|r| r.collisions > 0).count(),
            total_collisions: rows.iter().map(|r| r.collisions).sum(),
            min_distance: rows.iter().filter_map(|r| r.min_distance).reduce(f64::min),
            mean_abs_cte: mean(|r| r.mean_abs_cte),
            mean_cumulative_reward: mean(|r| r.cumulative_reward),
            mean_intervention_rate: mean(|r| r.intervention_rate),
            relaxed_ticks: rows.iter().map(|r| r.relaxed_ticks).sum(),
            infeasible_ticks: rows.iter().map(|r| r.infeasible_ticks).sum(),
            mean_solve_time_ms: mean(|r| r.mean_solve_time_ms),
            aborted: rows.iter().filter(|r| r.aborted.is_some()).count(),
        }
    }

    pub const CSV_HEADER: &'static str = "episodes,episodes_with_collision,total_collisions,min_distance,\
mean_abs_cte,mean_cumulative_reward,mean_intervention_rate,relaxed_ticks,infeasible_ticks,mean_solve_time_ms,aborted";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.episodes,
            self.episodes_with_collision,
            self.total_collisions,
            self.min_distance.map_or(String::new(), |d| d.to_string()),
            self.mean_abs_cte,
            self.mean_cumulative_reward,
            self.mean_intervention_rate,
            self.relaxed_ticks,
            self.infeasible_ticks,
            self.mean_solve_time_ms,
            self.aborted,
        )
    }
}

fn same_terminal_inputs(a: &Scenario, b: &Scenario) -> bool {
    a.vessel == b.vessel && a.psf.dt == b.psf.dt && a.psf.terminal == b.psf.terminal
}

/// Runs the given scenarios in parallel; results keep the input order.
/// Scenarios sharing vessel and terminal-set settings reuse one terminal set.
pub fn run_scenarios(scenarios: &[Scenario], opts: &EpisodeOptions) -> Result<Vec<EpisodeSummary>> {
    let shared: Option<(Scenario, TerminalSet)> = match scenarios.first() {
        Some(s) if opts.psf_enabled => Some((
            s.clone(),
            build_terminal_set(&s.vessel, s.psf.dt, &s.psf.terminal)?,
        )),
        _ => None,
    };
    scenarios
        .par_iter()
        .map(|s| {
            let own;
            let terminal = match &shared {
                Some((first, t)) if same_terminal_inputs(first, s) => Some(t),
                Some(_) => {
                    own = build_terminal_set(&s.vessel, s.psf.dt, &s.psf.terminal)?;
                    Some(&own)
                }
                None => None,
            };
            run_episode_with_terminal(s, opts, terminal).map(|(_, summary)| summary)
        })
        .collect()
}

/// Generated scenarios for every seed in `seeds`.
pub fn run_batch(
    seeds: Range<u64>,
    difficulty: Difficulty,
    opts: &EpisodeOptions,
) -> Result<Vec<EpisodeSummary>> {
    let scenarios: Vec<Scenario> = seeds
        .map(|seed| generate_random_scenario(seed, difficulty))
        .collect();
    run_scenarios(&scenarios, opts)
}

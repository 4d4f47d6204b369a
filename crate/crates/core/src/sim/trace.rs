use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{PolicyKind, RewardComponents};
use crate::safety::PsfStatus;
use crate::vessel::{ControlInput, VesselState};

pub const TRACE_SCHEMA: &str = "seaguard-trace/1";

/// Relative modification ‖δ_u‖/‖u_max‖ above which a tick counts as an
/// intervention.
pub const INTERVENTION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleInfoMode {
    /// Forecasts from confirmed tracker beliefs.
    Tracked,
    /// Forecasts from the scripted obstacle motion.
    GroundTruth,
    /// The filter sees no obstacles.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: String,
    pub seed: u64,
    pub policy: PolicyKind,
    pub psf_enabled: bool,
    pub info_mode: ObstacleInfoMode,
    pub dt: f64,
    pub psf_horizon: usize,
    pub psf_dt: f64,
    pub d_safe: f64,
    /// Process noise density of the obstacle model.
    pub process_noise: f64,
    pub inflation_sigmas: f64,
    pub vessel_radius: f64,
    pub obstacle_radii: Vec<f64>,
    /// ‖u_max‖ used to normalise modifications.
    pub u_max_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfRecord {
    pub status: PsfStatus,
    pub iterations: usize,
    pub cost: f64,
    pub max_violation: f64,
    pub slack_total: f64,
    /// Planned positions p_0..p_N.
    pub plan: Vec<[f64; 2]>,
    /// Index of the first planned step with negative margin.
    pub plan_first_violation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub track_id: u64,
    /// [x, y, vx, vy].
    pub mean: [f64; 4],
    /// Row-major 4×4 covariance.
    pub cov: [f64; 16],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRecord {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    /// Nearest confirmed track, if any is within the association distance.
    pub estimate: Option<EstimateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub state: VesselState,
    pub u_l: ControlInput,
    pub u_0: ControlInput,
    pub delta_u: ControlInput,
    /// `None` when the filter is disabled.
    pub psf: Option<PsfRecord>,
    pub obstacles: Vec<ObstacleRecord>,
    /// Confirmed tracks not associated with any obstacle.
    pub extra_tracks: Vec<EstimateRecord>,
    /// min_i d(p, O_i) − d_safe at this tick; `None` without obstacles.
    pub margin: Option<f64>,
    /// min_i ‖p − o_i‖ − r_i at this tick.
    pub clearance: Option<f64>,
    pub cross_track: f64,
    pub heading_error: f64,
    pub rewards: RewardComponents,
    pub r_total: f64,
    /// Collision at the end of this tick's transition.
    pub collision: bool,
}

impl TickRecord {
    pub fn relative_modification(&self, u_max_norm: f64) -> f64 {
        self.delta_u.norm() / u_max_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub ticks: Vec<TickRecord>,
    /// Reason the episode stopped early, if it did for a numerical failure.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceFooter {
    aborted: Option<String>,
}

impl EpisodeTrace {
    /// Line-delimited JSON: the header, one line per tick, then a footer.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        for t in &self.ticks {
            serde_json::to_writer(&mut w, t)?;
            writeln!(w)?;
        }
        serde_json::to_writer(
            &mut w,
            &TraceFooter {
                aborted: self.aborted.clone(),
            },
        )?;
        writeln!(w)?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R, origin: &str) -> Result<Self> {
        let parse_err = |line: usize, e: serde_json::Error| Error::Parse {
            path: origin.to_string(),
            message: format!("line {}: {e}", line + 1),
        };
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(origin, e))?;
        if lines.len() < 2 {
            return Err(Error::Parse {
                path: origin.to_string(),
                message: "trace needs a header and a footer".into(),
            });
        }
        let header: TraceHeader = serde_json::from_str(&lines[0]).map_err(|e| parse_err(0, e))?;
        let last = lines.len() - 1;
        let ticks = lines[1..last]
            .iter()
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
            .collect::<Result<Vec<TickRecord>>>()?;
        let footer: TraceFooter =
            serde_json::from_str(&lines[last]).map_err(|e| parse_err(last, e))?;
        Ok(Self {
            header,
            ticks,
            aborted: footer.aborted,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub policy: PolicyKind,
    pub psf_enabled: bool,
    pub info_mode: ObstacleInfoMode,
    pub ticks: usize,
    pub collisions: usize,
    /// Smallest clearance ‖p − o_i‖ − r_i over the episode [m].
    pub min_distance: Option<f64>,
    pub mean_abs_cte: f64,
    pub cumulative_reward: f64,
    /// Fraction of ticks with ‖δ_u‖/‖u_max‖ above [`INTERVENTION_TOL`].
    pub intervention_rate: f64,
    pub relaxed_ticks: usize,
    pub infeasible_ticks: usize,
    /// Wall-clock solve time; the only field not recomputable from the trace.
    pub mean_solve_time_ms: f64,
    pub aborted: Option<String>,
}

impl EpisodeSummary {
    pub fn from_trace(trace: &EpisodeTrace, mean_solve_time_ms: f64) -> Self {
        let h = &trace.header;
        let n = trace.ticks.len();
        let denom = n.max(1) as f64;
        let count_status = |s: PsfStatus| {
            trace
                .ticks
                .iter()
                .filter(|t| t.psf.as_ref().is_some_and(|p| p.status == s))
                .count()
        };
        Self {
            seed: h.seed,
            policy: h.policy,
            psf_enabled: h.psf_enabled,
            info_mode: h.info_mode,
            ticks: n,
            collisions: trace.ticks.iter().filter(|t| t.collision).count(),
            min_distance: trace
                .ticks
                .iter()
                .filter_map(|t| t.clearance)
                .reduce(f64::min),
            mean_abs_cte: trace.ticks.iter().map(|t| t.cross_track.abs()).sum::<f64>() / denom,
            cumulative_reward: trace.ticks.iter().map(|t| t.r_total).sum(),
            intervention_rate: trace
                .ticks
                .iter()
                .filter(|t| t.relative_modification(h.u_max_norm) > INTERVENTION_TOL)
                .count() as f64
                / denom,
            relaxed_ticks: count_status(PsfStatus::Relaxed),
            infeasible_ticks: count_status(PsfStatus::Infeasible),
            mean_solve_time_ms,
            aborted: trace.aborted.clone(),
        }
    }

    pub const CSV_HEADER: &'static str =
        "seed,policy,psf,info_mode,ticks,collisions,min_distance,mean_abs_cte,\
cumulative_reward,intervention_rate,relaxed_ticks,infeasible_ticks,mean_solve_time_ms,aborted";

    pub fn csv_row(&self) -> String {
        let policy = serde_json::to_value(self.policy).unwrap();
        let mode = serde_json::to_value(self.info_mode).unwrap();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            policy.as_str().unwrap_or_default(),
            self.psf_enabled,
            mode.as_str().unwrap_or_default(),
            self.ticks,
            self.collisions,
            self.min_distance.map_or(String::new(), |d| d.to_string()),
            self.mean_abs_cte,
            self.cumulative_reward,
            self.intervention_rate,
            self.relaxed_ticks,
            self.infeasible_ticks,
            self.mean_solve_time_ms,
            self.aborted.as_deref().unwrap_or("").replace(',', ";"),
        )
    }
}

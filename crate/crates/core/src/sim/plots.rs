//! Plot-ready CSV tables derived from an episode trace.
//!
//! | file | columns |
//! |---|---|
//! | `trajectory.csv` | tick,time,x,y,psi,u,v,r,tau_u_l,tau_v_l,tau_r_l,tau_u,tau_v,tau_r,rel_mod,status |
//! | `plan.csv` | tick,k,x,y |
//! | `tube.csv` | tick,obstacle,track_id,k,time,x,y,sigma |
//! | `margins.csv` | tick,time,clearance,margin,violation |
//! | `rewards.csv` | tick,time,r_path,r_colav,r_psf,r_total,collision |
//! | `obstacles.csv` | tick,time,obstacle,x,y,vx,vy,est_x,est_y,est_vx,est_vy,est_sigma |
//! | `summary.csv` | [`EpisodeSummary::CSV_HEADER`] |
//!
//! `status` is empty when the filter is disabled; `obstacle` is the scripted
//! index, or `extra` for unassociated tracks. The tube holds the
//! constant-velocity prediction of every estimate over the filter horizon,
//! emitted every [`TUBE_STRIDE`] ticks, with `sigma` the largest positional
//! standard deviation. `violation` is 1 exactly when `margin < 0`. The summary's
//! solve-time column is left empty since it is not part of the trace.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector4};

use super::trace::{EpisodeSummary, EpisodeTrace, EstimateRecord};
use crate::error::{Error, Result};
use crate::tracking::{position_sigma, predict_horizon, NoiseModel, TrackBelief};

/// Ticks between emitted prediction tubes.
pub const TUBE_STRIDE: u64 = 10;

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn belief_of(e: &EstimateRecord) -> TrackBelief {
    TrackBelief::new(
        Vector4::from(e.mean),
        Matrix4::from_row_slice(&e.cov),
        0.0,
        e.track_id,
    )
}

fn trajectory(trace: &EpisodeTrace) -> String {
    let mut out = String::from(
        "tick,time,x,y,psi,u,v,r,tau_u_l,tau_v_l,tau_r_l,tau_u,tau_v,tau_r,rel_mod,status\n",
    );
    for t in &trace.ticks {
        let s = &t.state;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.tick,
            t.time,
            s.x,
            s.y,
            s.psi,
            s.u,
            s.v,
            s.r,
            t.u_l.tau_u,
            t.u_l.tau_v,
            t.u_l.tau_r,
            t.u_0.tau_u,
            t.u_0.tau_v,
            t.u_0.tau_r,
            t.relative_modification(trace.header.u_max_norm),
            t.psf.as_ref().map_or("", |p| p.status.as_str()),
        )
        .unwrap();
    }
    out
}

fn plan(trace: &EpisodeTrace) -> String {
    let mut out = String::from("tick,k,x,y\n");
    for t in &trace.ticks {
        if let Some(p) = &t.psf {
            for (k, q) in p.plan.iter().enumerate() {
                writeln!(out, "{},{k},{},{}", t.tick, q[0], q[1]).unwrap();
            }
        }
    }
    out
}

fn tube(trace: &EpisodeTrace) -> String {
    let h = &trace.header;
    let noise = NoiseModel { q: h.process_noise };
    let mut out = String::from("tick,obstacle,track_id,k,time,x,y,sigma\n");
    for t in trace.ticks.iter().filter(|t| t.tick % TUBE_STRIDE == 0) {
        let labelled = t
            .obstacles
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.estimate.as_ref().map(|e| (i.to_string(), e)));
        let extra = t.extra_tracks.iter().map(|e| ("extra".to_string(), e));
        for (label, e) in labelled.chain(extra) {
            let b = belief_of(e);
            let mut row = |k: usize, m: &Vector4<f64>, p: &Matrix4<f64>| {
                let time = t.time + k as f64 * h.psf_dt;
                writeln!(
                    out,
                    "{},{label},{},{k},{time},{},{},{}",
                    t.tick,
                    e.track_id,
                    m[0],
                    m[1],
                    position_sigma(p)
                )
                .unwrap();
            };
            row(0, &b.mean, &b.cov);
            for (k, (m, p)) in predict_horizon(&b, h.psf_horizon, h.psf_dt, &noise)
                .iter()
                .enumerate()
            {
                row(k + 1, m, p);
            }
        }
    }
    out
}

fn margins(trace: &EpisodeTrace) -> String {
    let mut out = String::from("tick,time,clearance,margin,violation\n");
    for t in &trace.ticks {
        let flag = t.margin.map_or("", |m| if m < 0.0 { "1" } else { "0" });
        writeln!(
            out,
            "{},{},{},{},{flag}",
            t.tick,
            t.time,
            opt(t.clearance),
            opt(t.margin)
        )
        .unwrap();
    }
    out
}

fn rewards(trace: &EpisodeTrace) -> String {
    let mut out = String::from("tick,time,r_path,r_colav,r_psf,r_total,collision\n");
    for t in &trace.ticks {
        let r = &t.rewards;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.tick, t.time, r.r_path, r.r_colav, r.r_psf, t.r_total, t.collision as u8
        )
        .unwrap();
    }
    out
}

fn obstacles(trace: &EpisodeTrace) -> String {
    let mut out =
        String::from("tick,time,obstacle,x,y,vx,vy,est_x,est_y,est_vx,est_vy,est_sigma\n");
    for t in &trace.ticks {
        for (i, o) in t.obstacles.iter().enumerate() {
            let est = match &o.estimate {
                Some(e) => {
                    let sigma = position_sigma(&Matrix4::from_row_slice(&e.cov));
                    format!(
                        "{},{},{},{},{sigma}",
                        e.mean[0], e.mean[1], e.mean[2], e.mean[3]
                    )
                }
                None => ",,,,".to_string(),
            };
            writeln!(
                out,
                "{},{},{i},{},{},{},{},{est}",
                t.tick, t.time, o.position[0], o.position[1], o.velocity[0], o.velocity[1]
            )
            .unwrap();
        }
    }
    out
}

fn summary(trace: &EpisodeTrace) -> String {
    let row = EpisodeSummary::from_trace(trace, 0.0).csv_row();
    // Drop the solve time, keeping the column.
    let mut cols: Vec<&str> = row.split(',').collect();
    let solve = EpisodeSummary::CSV_HEADER
        .split(',')
        .position(|c| c == "mean_solve_time_ms")
        .unwrap();
    cols[solve] = "";
    format!("{}\n{}\n", EpisodeSummary::CSV_HEADER, cols.join(","))
}

/// Writes the plot tables into `out_dir` (created if missing) and returns
/// the written paths.
pub fn emit_plots(trace: &EpisodeTrace, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.ticks.is_empty() {
        return Err(Error::validation(
            "trace.ticks",
            "cannot plot an empty trace",
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tables = [
        ("trajectory.csv", trajectory(trace)),
        ("plan.csv", plan(trace)),
        ("tube.csv", tube(trace)),
        ("margins.csv", margins(trace)),
        ("rewards.csv", rewards(trace)),
        ("obstacles.csv", obstacles(trace)),
        ("summary.csv", summary(trace)),
    ];
    let mut written = Vec::with_capacity(tables.len());
    for (name, body) in tables {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

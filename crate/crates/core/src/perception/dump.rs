//! Line-oriented text formats for scans, point clouds and fit results.

use std::fmt::Write as _;
use std::path::Path;

use super::ellipse::EllipseParams;
use super::lidar::{Beam, LidarScan, SensorPose};
use crate::error::{Error, Result};

pub(crate) const SCAN_HEADER: &str = "# seaguard-scan v1";
pub(crate) const POINTS_HEADER: &str = "# seaguard-points v1";
pub(crate) const FIT_HEADER: &str = "# seaguard-fit v1";
const FIT_COLUMNS: &str = "label,method,status,a,b,c,d,e,f,cx,cy,major,minor,phi,rms";

fn parse_error(origin: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: format!("{}:{line}", origin.display()),
        message: message.into(),
    }
}

fn number(origin: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_error(origin, line, format!("invalid number '{s}'")))
}

/// One row per beam: `time,angle,range` with `miss` for no return.
pub fn write_scan(scan: &LidarScan) -> String {
    let p = &scan.sensor_pose;
    let mut out = String::new();
    writeln!(out, "{SCAN_HEADER}").unwrap();
    writeln!(out, "# pose,x,y,psi,max_range,noise_sigma").unwrap();
    writeln!(
        out,
        "pose,{},{},{},{},{}",
        p.x, p.y, p.psi, scan.max_range, scan.noise_sigma
    )
    .unwrap();
    writeln!(out, "time,angle,range").unwrap();
    for b in &scan.beams {
        match b.range {
            Some(r) => writeln!(out, "{},{},{}", scan.time, b.angle, r).unwrap(),
            None => writeln!(out, "{},{},miss", scan.time, b.angle).unwrap(),
        }
    }
    out
}

pub fn read_scan(text: &str, origin: &Path) -> Result<LidarScan> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == SCAN_HEADER => {}
        _ => {
            return Err(parse_error(
                origin,
                1,
                format!("missing '{SCAN_HEADER}' header"),
            ))
        }
    }
    let mut pose: Option<(SensorPose, f64, f64)> = None;
    let mut time = None;
    let mut beams = Vec::new();
    for (i, raw) in lines {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == "time,angle,range" {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols[0] == "pose" {
            if cols.len() != 6 {
                return Err(parse_error(origin, ln, "pose row needs 5 values"));
            }
            let v: Vec<f64> = cols[1..]
                .iter()
                .map(|c| number(origin, ln, c))
                .collect::<Result<_>>()?;
            pose = Some((
                SensorPose {
                    x: v[0],
                    y: v[1],
                    psi: v[2],
                },
                v[3],
                v[4],
            ));
            continue;
        }
        if cols.len() != 3 {
            return Err(parse_error(
                origin,
                ln,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let t = number(origin, ln, cols[0])?;
        if *time.get_or_insert(t) != t {
            return Err(parse_error(
                origin,
                ln,
                "all beams of a scan share one time",
            ));
        }
        let angle = number(origin, ln, cols[1])?;
        let range = match cols[2].trim() {
            "miss" => None,
            s => Some(number(origin, ln, s)?),
        };
        beams.push(Beam { angle, range });
    }
    let (sensor_pose, max_range, noise_sigma) =
        pose.ok_or_else(|| parse_error(origin, 0, "missing pose row"))?;
    Ok(LidarScan {
        time: time.unwrap_or(0.0),
        sensor_pose,
        beams,
        max_range,
        noise_sigma,
    })
}

/// Labelled point groups, in first-appearance order.
pub type PointGroups = Vec<(String, Vec<[f64; 2]>)>;

/// Reads `label,x,y` or `x,y` rows (unlabelled rows share the label `0`).
pub fn read_point_groups(text: &str, origin: &Path) -> Result<PointGroups> {
    let mut groups: PointGroups = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == "label,x,y" || line == "x,y" {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let (label, x, y) = match cols.as_slice() {
            [x, y] => ("0", *x, *y),
            [l, x, y] => (*l, *x, *y),
            _ => return Err(parse_error(origin, ln, "expected 'x,y' or 'label,x,y'")),
        };
        let p = [number(origin, ln, x)?, number(origin, ln, y)?];
        match groups.iter_mut().find(|(l, _)| l == label) {
            Some((_, pts)) => pts.push(p),
            None => groups.push((label.to_string(), vec![p])),
        }
    }
    Ok(groups)
}

pub fn write_points(groups: &PointGroups) -> String {
    let mut out = format!("{POINTS_HEADER}\nlabel,x,y\n");
    for (label, pts) in groups {
        for p in pts {
            writeln!(out, "{label},{},{}", p[0], p[1]).unwrap();
        }
    }
    out
}

/// Fit table with one row per (label, method); failed fits keep the error
/// category in `status` and leave the numeric columns empty.
pub fn write_fit_dump(rows: &[(String, &str, Result<EllipseParams>)]) -> String {
    let mut out = format!("{FIT_HEADER}\n{FIT_COLUMNS}\n");
    for (label, method, fit) in rows {
        match fit {
            Ok(e) => {
                let k = e.coeffs;
                writeln!(
                    out,
                    "{label},{method},ok,{},{},{},{},{},{},{},{},{},{},{},{}",
                    k[0],
                    k[1],
                    k[2],
                    k[3],
                    k[4],
                    k[5],
                    e.center[0],
                    e.center[1],
                    e.semi_axes[0],
                    e.semi_axes[1],
                    e.orientation,
                    e.residual_rms
                )
                .unwrap();
            }
            Err(err) => {
                let status = match err {
                    Error::NotAnEllipse { .. } => "not_an_ellipse",
                    Error::FitDegenerate(_) => "degenerate",
                    _ => "failed",
                };
                writeln!(out, "{label},{method},{status},,,,,,,,,,,,").unwrap();
            }
        }
    }
    out
}

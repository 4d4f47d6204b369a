use serde::{Deserialize, Serialize};

use crate::angle::angle_diff;
use crate::error::{Error, Result};
use crate::vessel::VesselState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    #[serde(default)]
    waypoints: Vec<[f64; 2]>,
}

/// Polyline path with a cached arc-length parameterisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath", into = "RawPath")]
pub struct PathSpec {
    waypoints: Vec<[f64; 2]>,
    /// Arc length at each waypoint.
    cumulative: Vec<f64>,
}

impl TryFrom<RawPath> for PathSpec {
    type Error = Error;

    fn try_from(raw: RawPath) -> Result<Self> {
        PathSpec::new(raw.waypoints)
    }
}

impl From<PathSpec> for RawPath {
    fn from(p: PathSpec) -> Self {
        RawPath {
            waypoints: p.waypoints,
        }
    }
}

/// Closest point on the path to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub point: [f64; 2],
    pub segment: usize,
    /// Arc length of `point`.
    pub s: f64,
    /// Tangent bearing of the segment [rad].
    pub bearing: f64,
    /// Signed perpendicular offset, positive to port.
    pub cross_track: f64,
}

impl PathSpec {
    pub fn new(waypoints: Vec<[f64; 2]>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::validation(
                "path.waypoints",
                "at least 2 waypoints are required",
            ));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation(
                "path.waypoints",
                "coordinates must be finite",
            ));
        }
        let mut cumulative = vec![0.0];
        for (i, w) in waypoints.windows(2).enumerate() {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if len <= 0.0 {
                return Err(Error::validation(
                    "path.waypoints",
                    format!("waypoints {i} and {} coincide", i + 1),
                ));
            }
            cumulative.push(cumulative[i] + len);
        }
        Ok(Self {
            waypoints,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.waypoints
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_bearing(&self, i: usize) -> f64 {
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Point at arc length `s`, clamped to the path ends.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.iter().rposition(|c| *c <= s) {
            Some(i) if i + 1 < self.waypoints.len() => i,
            _ => self.waypoints.len() - 2,
        };
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let t = (s - self.cumulative[i]) / (self.cumulative[i + 1] - self.cumulative[i]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Projection onto the nearest segment; ties go to the earlier segment.
    pub fn project(&self, p: [f64; 2]) -> PathProjection {
        let mut best: Option<(f64, PathProjection)> = None;
        for i in 0..self.waypoints.len() - 1 {
            let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
            let q = [a[0] + t * dx, a[1] + t * dy];
            let dist = (p[0] - q[0]).hypot(p[1] - q[1]);
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                // Side from the segment direction; at an endpoint the
                // perpendicular is still taken against this segment.
                let cross = dx * (p[1] - a[1]) - dy * (p[0] - a[0]);
                let sign = if cross >= 0.0 { 1.0 } else { -1.0 };
                best = Some((
                    dist,
                    PathProjection {
                        point: q,
                        segment: i,
                        s: self.cumulative[i] + t * len2.sqrt(),
                        bearing: self.segment_bearing(i),
                        cross_track: sign * dist,
                    },
                ));
            }
        }
        best.unwrap().1
    }
}

/// Signed distance to the closest point of the path, positive to port.
/// Discontinuous in sign only where two segments are equidistant on the
/// inside of a reflex corner.
pub fn cross_track_error(path: &PathSpec, p: [f64; 2]) -> f64 {
    path.project(p).cross_track
}

/// Heading relative to the path tangent at the closest point, in (−π, π].
pub fn heading_error(path: &PathSpec, state: &VesselState) -> f64 {
    let proj = path.project(state.position());
    angle_diff(state.psi, proj.bearing)
}

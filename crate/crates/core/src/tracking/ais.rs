use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const AIS_HEADER: &str = "# seaguard-ais v1";
const AIS_COLUMNS: &str = "stamp,vessel_id,x,y,speed,course";

/// Simplified AIS position report. `course` is the direction of travel as a
/// planar angle [rad], counter-clockwise from the +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AisMessage {
    pub stamp: f64,
    pub vessel_id: u32,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub course: f64,
}

impl AisMessage {
    /// Reported position dead-reckoned to time `t`.
    pub fn position_at(&self, t: f64) -> Vector2<f64> {
        let dt = t - self.stamp;
        Vector2::new(
            self.x + self.speed * self.course.cos() * dt,
            self.y + self.speed * self.course.sin() * dt,
        )
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(
            self.speed * self.course.cos(),
            self.speed * self.course.sin(),
        )
    }
}

pub fn write_ais(messages: &[AisMessage]) -> String {
    let mut out = format!("{AIS_HEADER}\n{AIS_COLUMNS}\n");
    for m in messages {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.stamp, m.vessel_id, m.x, m.y, m.speed, m.course
        )
        .unwrap();
    }
    out
}

/// Parses an AIS replay file. `origin` names the source in error messages.
pub fn read_ais(text: &str, origin: &Path) -> Result<Vec<AisMessage>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: format!("{}:{line}", origin.display()),
        message: msg,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line == AIS_COLUMNS {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 6 {
            return Err(parse_err(
                i + 1,
                format!("expected 6 columns, found {}", cols.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(i + 1, format!("column {k}: invalid number '{}'", cols[k]))
                })
        };
        let vessel_id = cols[1]
            .parse::<u32>()
            .map_err(|e| parse_err(i + 1, format!("vessel_id: {e}")))?;
        out.push(AisMessage {
            stamp: num(0)?,
            vessel_id,
            x: num(2)?,
            y: num(3)?,
            speed: num(4)?,
            course: num(5)?,
        });
    }
    if out.windows(2).any(|w| w[1].stamp < w[0].stamp) {
        return Err(parse_err(0, "stamps must be non-decreasing".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let msgs = vec![
            AisMessage {
                stamp: 0.0,
                vessel_id: 3,
                x: 1.5,
                y: -2.25,
                speed: 0.8,
                course: 1.2,
            },
            AisMessage {
                stamp: 60.0,
                vessel_id: 4,
                x: 1e-3,
                y: 7.0,
                speed: 0.0,
                course: -3.0,
            },
        ];
        let text = write_ais(&msgs);
        assert!(text.starts_with(AIS_HEADER));
        assert_eq!(read_ais(&text, Path::new("mem")).unwrap(), msgs);
    }

    #[test]
    fn bad_line_names_location() {
        let err = read_ais("# seaguard-ais v1\n1,2,3\n", Path::new("f.ais")).unwrap_err();
        assert!(err.to_string().contains("f.ais:2"), "{err}");
    }

    #[test]
    fn dead_reckoning() {
        let m = AisMessage {
            stamp: 10.0,
            vessel_id: 1,
            x: 0.0,
            y: 0.0,
            speed: 2.0,
            course: 0.0,
        };
        assert_eq!(m.position_at(12.0), Vector2::new(4.0, 0.0));
    }
}

use std::fmt::Write as _;

use super::{CubicSegment, FinShape, GeometryError, EPS_GEOM};
use crate::math::Vec2;

/// Serialises fins to the plain-text geometry format.
///
/// Each fin is a `fin <id>` header followed by one line per segment holding
/// `p0x p0y p1x p1y p2x p2y p3x p3y` in meters. Values are written with
/// round-trip precision.
pub fn write_geometry(shapes: &[FinShape]) -> String {
    let mut s = String::from("# cubic Bezier fin contours, one segment per line, meters\n");
    for (id, shape) in shapes.iter().enumerate() {
        let _ = writeln!(s, "fin {id}");
        for seg in &shape.segments {
            let v: Vec<String> = seg
                .control_points()
                .iter()
                .flat_map(|p| [p.x, p.y])
                .map(|c| format!("{c:?}"))
                .collect();
            let _ = writeln!(s, "{}", v.join(" "));
        }
    }
    s
}

/// Parses the plain-text geometry format.
///
/// Blank lines and `#` comments are ignored. Consecutive segments must meet
/// within `EPS_GEOM`; the start of each segment is then snapped onto the end
/// of its predecessor so the chain is exactly closed. An input without any
/// fin yields an empty list.
pub fn read_geometry(text: &str, samples_per_segment: usize) -> Result<Vec<FinShape>, GeometryError> {
    let mut fins: Vec<(usize, Vec<(usize, CubicSegment)>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| GeometryError::Parse { line: line_no, message };
        if let Some(rest) = line.strip_prefix("fin") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                rest.trim()
                    .parse::<usize>()
                    .map_err(|_| perr(format!("expected `fin <id>`, got `{line}`")))?;
                fins.push((line_no, Vec::new()));
                continue;
            }
        }
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(format!("`{t}` is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != 8 {
            return Err(perr(format!("expected 8 coordinates, found {}", values.len())));
        }
        let Some(current) = fins.last_mut() else {
            return Err(perr("segment before any `fin` header".into()));
        };
        let p = |a: usize| Vec2::new(values[2 * a], values[2 * a + 1]);
        current.1.push((line_no, CubicSegment::new(p(0), p(1), p(2), p(3))));
    }

    fins.into_iter()
        .map(|(header_line, mut segs)| {
            if segs.len() < 2 {
                return Err(GeometryError::Parse {
                    line: header_line,
                    message: format!("fin has {} segments, need at least 2", segs.len()),
                });
            }
            let n = segs.len();
            for i in 0..n {
                let next = (i + 1) % n;
                let end = segs[i].1.p3;
                let gap = (segs[next].1.p0 - end).norm();
                if gap > EPS_GEOM {
                    return Err(GeometryError::Parse {
                        line: segs[next].0,
                        message: format!("segment starts {gap:e} m away from the previous segment's end"),
                    });
                }
                segs[next].1.p0 = end;
            }
            FinShape::new(segs.into_iter().map(|(_, s)| s).collect(), samples_per_segment)
        })
        .collect()
}

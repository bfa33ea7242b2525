use serde::{Deserialize, Serialize};

use super::{CubicSegment, GeometryError, GeometryParams};
use crate::grid::{CellKind, CellMask, StructuredGrid};
use crate::math::{Rect, Vec2};

/// One closed fin contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinShape {
    /// Closed chain: segment `i` ends exactly where segment `i + 1` starts.
    pub segments: Vec<CubicSegment>,
    /// Dense boundary samples; the last point repeats the first.
    pub polyline: Vec<Vec2>,
    /// Bounding box of the exact curve (so it also holds every sample).
    pub bbox: Rect,
}

impl FinShape {
    pub fn new(segments: Vec<CubicSegment>, samples_per_segment: usize) -> Result<Self, GeometryError> {
        if segments.is_empty() {
            return Err(GeometryError::Domain("a fin needs at least one segment".into()));
        }
        if samples_per_segment < 1 {
            return Err(GeometryError::Domain("need at least one sample per segment".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !s.is_finite() {
                return Err(GeometryError::Domain(format!(
                    "segment {i} has non-finite control points"
                )));
            }
            if s.p3 != segments[(i + 1) % segments.len()].p0 {
                return Err(GeometryError::OpenContour { fin: 0, segment: i });
            }
        }
        let mut polyline = Vec::with_capacity(segments.len() * samples_per_segment + 1);
        for s in &segments {
            for k in 0..samples_per_segment {
                polyline.push(s.point_at(k as f64 / samples_per_segment as f64));
            }
        }
        polyline.push(polyline[0]);
        let mut bbox = segments[0].bounding_box();
        for s in &segments[1..] {
            let b = s.bounding_box();
            bbox.include(Vec2::new(b.x_min, b.y_min));
            bbox.include(Vec2::new(b.x_max, b.y_max));
        }
        for p in &polyline {
            bbox.include(*p);
        }
        Ok(Self {
            segments,
            polyline,
            bbox,
        })
    }

    pub fn samples_per_segment(&self) -> usize {
        (self.polyline.len() - 1) / self.segments.len()
    }

    /// Signed area enclosed by the polyline (positive when counter-clockwise).
    pub fn signed_area(&self) -> f64 {
        0.5 * self.polyline.windows(2).map(|w| w[0].cross(w[1])).sum::<f64>()
    }

    /// Mean of the polyline samples.
    pub fn centroid_estimate(&self) -> Vec2 {
        let n = (self.polyline.len() - 1) as f64;
        let s = self.polyline[..self.polyline.len() - 1]
            .iter()
            .fold(Vec2::ZERO, |a, p| a + *p);
        s * (1.0 / n)
    }

    /// True when two non-adjacent polyline edges cross.
    pub fn self_intersects(&self) -> bool {
        let p = &self.polyline;
        let n = p.len() - 1;
        for a in 0..n {
            for b in a + 2..n {
                if a == 0 && b == n - 1 {
                    continue;
                }
                if segments_cross(p[a], p[a + 1], p[b], p[b + 1]) {
                    return true;
                }
            }
        }
        false
    }

    /// True when the two contours cross or one contains the other.
    pub fn overlaps(&self, other: &FinShape) -> bool {
        if !self.bbox.intersects(&other.bbox) {
            return false;
        }
        polylines_intersect(&self.polyline, &other.polyline)
            || contains(self, other.polyline[0])
            || contains(other, self.polyline[0])
    }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Whether any edge of polyline `a` properly crosses any edge of `b`.
pub fn polylines_intersect(a: &[Vec2], b: &[Vec2]) -> bool {
    a.windows(2).any(|ea| {
        let ra = Rect::bounding([ea[0], ea[1]]).expect("two points");
        b.windows(2).any(|eb| {
            let rb = Rect::bounding([eb[0], eb[1]]).expect("two points");
            ra.intersects(&rb) && segments_cross(ea[0], ea[1], eb[0], eb[1])
        })
    })
}

/// Non-zero winding test against the fin's dense polyline.
///
/// Uses half-open crossing rules, so a point exactly on a horizontal edge or
/// vertex is classified the same way every time.
pub fn contains(shape: &FinShape, p: Vec2) -> bool {
    if !shape.bbox.contains(p) {
        return false;
    }
    winding_number(&shape.polyline, p) != 0
}

fn winding_number(poly: &[Vec2], p: Vec2) -> i32 {
    let mut wn = 0;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Classifies every cell of `grid` by its centre; where fins overlap, the
/// lowest fin index wins.
///
/// Works row by row: edge crossings with the row's centre line are collected
/// and swept left to right, accumulating the winding number.
pub fn rasterize(shapes: &[FinShape], grid: &StructuredGrid) -> CellMask {
    let mut mask = CellMask::all_fluid(grid.nx, grid.ny);
    let dx = grid.dx();
    let x0 = grid.extent.x_min;
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for (id, shape) in shapes.iter().enumerate() {
        for j in 0..grid.ny {
            let y = grid.cell_center(0, j).y;
            if y < shape.bbox.y_min || y > shape.bbox.y_max {
                continue;
            }
            crossings.clear();
            for w in shape.polyline.windows(2) {
                let (a, b) = (w[0], w[1]);
                let dir = if a.y <= y && b.y > y {
                    1
                } else if a.y > y && b.y <= y {
                    -1
                } else {
                    continue;
                };
                let xc = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                crossings.push((xc, dir));
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(|l, r| l.0.total_cmp(&r.0));
            // winding at a point = sum of directions of crossings to its right
            let mut wn: i32 = crossings.iter().map(|c| c.1).sum();
            let mut k = 0;
            for i in 0..grid.nx {
                let xc = x0 + (i as f64 + 0.5) * dx;
                while k < crossings.len() && crossings[k].0 <= xc {
                    wn -= crossings[k].1;
                    k += 1;
                }
                if wn != 0 && !mask.is_solid(i, j) {
                    mask.set(i, j, CellKind::Fin(id as u16));
                }
            }
        }
    }
    mask
}

/// Axis-aligned rectangular fins written as chains of straight cubic segments.
///
/// `length` is the streamwise (x) extent, `width` the transverse (y) extent,
/// and each entry of `centers` places one fin.
pub fn make_straight_fin_baseline(
    geom: &GeometryParams,
    width: f64,
    length: f64,
    centers: &[Vec2],
) -> Result<Vec<FinShape>, GeometryError> {
    if !(width > 0.0 && length > 0.0 && width.is_finite() && length.is_finite()) {
        return Err(GeometryError::Domain(format!(
            "fin dimensions must be positive, got width {width} and length {length}"
        )));
    }
    centers
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let r = Rect::new(
                c.x - 0.5 * length,
                c.x + 0.5 * length,
                c.y - 0.5 * width,
                c.y + 0.5 * width,
            );
            if !geom.design_domain.contains_rect(&r, 1e-12) {
                return Err(GeometryError::Domain(format!(
                    "straight fin {k} ({r:?}) leaves the design domain"
                )));
            }
            let corners = [
                Vec2::new(r.x_min, r.y_min),
                Vec2::new(r.x_max, r.y_min),
                Vec2::new(r.x_max, r.y_max),
                Vec2::new(r.x_min, r.y_max),
            ];
            let segs = (0..4)
                .map(|i| CubicSegment::line(corners[i], corners[(i + 1) % 4]))
                .collect();
            FinShape::new(segs, geom.samples_per_segment)
        })
        .collect()
}

//! Composite cubic Bézier fins decoded from a flat decision vector.
//!
//! Each fin starts from `m` polar vertices around a shifted centre. Every
//! vertex gets a tangent heading blended from its incoming and outgoing
//! polygon edges, and every polygon edge is replaced by a cubic segment
//! whose interior control points sit on those tangents. Adjacent segments
//! share their end vertex and their tangent line, so the contour is closed
//! and G1 continuous by construction.

mod bezier;
mod io;
mod shape;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bezier::{bernstein, eval_segment, CubicSegment};
pub use io::{read_geometry, write_geometry};
pub use shape::{contains, make_straight_fin_baseline, polylines_intersect, rasterize, FinShape};

use crate::math::{wrap_angle, Rect, Vec2};

/// Distance below which two vertices are considered coincident [m].
pub const EPS_GEOM: f64 = 1e-9;

/// Ratio of the tangent offset to the chord for a quarter-circle cubic.
pub const ARC_OFFSET_RATIO: f64 = 0.707;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("degenerate geometry: fin {fin}, edge {edge} has length {length:e} m")]
    DegenerateGeometry { fin: usize, edge: usize, length: f64 },
    #[error("decision vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("decision vector entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("invalid geometry parameters: {0}")]
    InvalidParams(String),
    #[error("fin {fin}: segment {segment} does not end where the next one starts")]
    OpenContour { fin: usize, segment: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Global shape-construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub n_fins: usize,
    /// Primary vertices (and Bézier segments) per fin.
    pub m_vertices: usize,
    /// Radius of the unperturbed vertex circle [m].
    pub r_max: f64,
    /// Curvature scaling of the interior control-point offset, in `[0, 1]`.
    pub r_mid: f64,
    /// Rectangle the fins are meant to stay inside [m]. Position shifts in
    /// the decision vector are expressed relative to its centre, in units of
    /// its half-extent.
    pub design_domain: Rect,
    /// Polyline samples per segment used for membership and rasterisation.
    pub samples_per_segment: usize,
}

impl GeometryParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidParams(m.to_string()));
        if self.n_fins < 1 {
            return bad("n_fins must be at least 1");
        }
        if self.n_fins > u16::MAX as usize {
            return bad("too many fins");
        }
        if self.m_vertices < 3 {
            return bad("m_vertices must be at least 3");
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return bad("r_max must be positive");
        }
        if !(0.0..=1.0).contains(&self.r_mid) {
            return bad("r_mid must lie in [0, 1]");
        }
        if !self.design_domain.is_non_degenerate() {
            return bad("design_domain is degenerate");
        }
        if self.samples_per_segment < 2 {
            return bad("samples_per_segment must be at least 2");
        }
        Ok(())
    }

    /// Length of a decision vector for these parameters: `2 n + 3 m n`.
    pub fn dimension(&self) -> usize {
        2 * self.n_fins + 3 * self.m_vertices * self.n_fins
    }
}

/// Per-vertex deformation triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexDeformation {
    /// Radial scale; the vertex radius is `|dr| r_max`.
    pub dr: f64,
    /// Angular offset in units of half the vertex spacing.
    pub dtheta: f64,
    /// Tangent blending control in `[0, 1]`.
    pub eta: f64,
}

/// Placement and deformation of a single fin, with the shift in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FinParams {
    pub x_shift: f64,
    pub y_shift: f64,
    pub vertices: Vec<VertexDeformation>,
}

/// Flat optimisation vector: `n` x-shifts, `n` y-shifts, then `(dr, dθ, η)`
/// triplets, fin-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector(Vec<f64>);

impl DecisionVector {
    pub fn new(values: Vec<f64>, geom: &GeometryParams) -> Result<Self, GeometryError> {
        if values.len() != geom.dimension() {
            return Err(GeometryError::DimensionMismatch {
                expected: geom.dimension(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Splits the vector into per-fin parameters, mapping the normalised
    /// shifts onto the design domain and clamping `dθ` to `[-1, 1]` and `η`
    /// to `[0, 1]`.
    pub fn fin_params(&self, geom: &GeometryParams) -> Vec<FinParams> {
        let n = geom.n_fins;
        let m = geom.m_vertices;
        let c = geom.design_domain.center();
        let hx = 0.5 * geom.design_domain.width();
        let hy = 0.5 * geom.design_domain.height();
        (0..n)
            .map(|f| {
                let base = 2 * n + 3 * m * f;
                FinParams {
                    x_shift: c.x + self.0[f] * hx,
                    y_shift: c.y + self.0[n + f] * hy,
                    vertices: (0..m)
                        .map(|i| {
                            let t = &self.0[base + 3 * i..base + 3 * i + 3];
                            VertexDeformation {
                                dr: t[0],
                                dtheta: t[1].clamp(-1.0, 1.0),
                                eta: t[2].clamp(0.0, 1.0),
                            }
                        })
                        .collect(),
                }
            })
            .collect()
    }
}

/// Polar vertices of one fin: angle `i·2π/m + dθ_i·2π/(2m)`, radius
/// `|dr_i|·r_max`, translated by the fin shift.
pub fn primary_vertices(fin: &FinParams, geom: &GeometryParams) -> Vec<Vec2> {
    let m = fin.vertices.len() as f64;
    fin.vertices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let theta = i as f64 * TAU / m + d.dtheta * TAU / (2.0 * m);
            let r = d.dr.abs() * geom.r_max;
            Vec2::new(r * theta.cos() + fin.x_shift, r * theta.sin() + fin.y_shift)
        })
        .collect()
}

/// Tangent heading at every vertex of a closed polygon.
///
/// The heading is `w φ_out + (1 - w) φ_in` with `w = 0.5 + 0.5 η`, where
/// `φ_out` is the heading of the edge leaving the vertex and `φ_in` that of
/// the edge arriving at it. When the two headings straddle the `0/2π` cut
/// (differ by more than π) the smaller one is lifted by 2π first so the
/// blend follows the shorter arc; for equal weights this is the same as
/// adding π to the naive average. Results are wrapped to `[0, 2π)`.
pub fn blended_tangents(vertices: &[Vec2], eta: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let m = vertices.len();
    if m < 2 || eta.len() != m {
        return Err(GeometryError::Domain(format!(
            "need matching vertex/eta lists, got {m} and {}",
            eta.len()
        )));
    }
    let mut out_heading = Vec::with_capacity(m);
    for i in 0..m {
        let d = vertices[(i + 1) % m] - vertices[i];
        let len = d.norm();
        if !(len > EPS_GEOM) {
            return Err(GeometryError::DegenerateGeometry {
                fin: 0,
                edge: i,
                length: len,
            });
        }
        out_heading.push(d.heading());
    }
    Ok((0..m)
        .map(|i| {
            let w = 0.5 + 0.5 * eta[i];
            let mut phi_out = out_heading[i];
            let mut phi_in = out_heading[(i + m - 1) % m];
            if (phi_out - phi_in).abs() > PI {
                if phi_out < phi_in {
                    phi_out += TAU;
                } else {
                    phi_in += TAU;
                }
            }
            wrap_angle(w * phi_out + (1.0 - w) * phi_in)
        })
        .collect())
}

/// Interior control points of the segment from `p_start` to `p_end`.
///
/// Both points are offset by `0.707 · d · r_mid` (with `d` the chord length)
/// along the start tangent and against the end tangent respectively.
pub fn intermediate_points(
    p_start: Vec2,
    p_end: Vec2,
    phi_start: f64,
    phi_end: f64,
    r_mid: f64,
) -> Result<(Vec2, Vec2), GeometryError> {
    let d = (p_end - p_start).norm();
    if !(d > EPS_GEOM) {
        return Err(GeometryError::DegenerateGeometry {
            fin: 0,
            edge: 0,
            length: d,
        });
    }
    let r_m = ARC_OFFSET_RATIO * d * r_mid;
    let p1 = p_start + Vec2::from_angle(phi_start) * r_m;
    let p2 = p_end + Vec2::from_angle(phi_end + PI) * r_m;
    Ok((p1, p2))
}

/// Builds the closed segment chain of one fin from its parameters.
pub fn fin_segments(fin: &FinParams, geom: &GeometryParams) -> Result<Vec<CubicSegment>, GeometryError> {
    let verts = primary_vertices(fin, geom);
    let etas: Vec<f64> = fin.vertices.iter().map(|v| v.eta).collect();
    let phi = blended_tangents(&verts, &etas)?;
    let m = verts.len();
    (0..m)
        .map(|i| {
            let k = (i + 1) % m;
            let (p1, p2) =
                intermediate_points(verts[i], verts[k], phi[i], phi[k], geom.r_mid).map_err(|e| relabel_edge(e, i))?;
            Ok(CubicSegment::new(verts[i], p1, p2, verts[k]))
        })
        .collect()
}

fn relabel_edge(e: GeometryError, edge: usize) -> GeometryError {
    match e {
        GeometryError::DegenerateGeometry { fin, length, .. } => {
            GeometryError::DegenerateGeometry { fin, edge, length }
        }
        other => other,
    }
}

fn relabel_fin(e: GeometryError, fin: usize) -> GeometryError {
    match e {
        GeometryError::DegenerateGeometry { edge, length, .. } => {
            GeometryError::DegenerateGeometry { fin, edge, length }
        }
        other => other,
    }
}

/// Validity flags raised while decoding; neither stops the evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    /// Per fin: the contour crosses itself.
    pub self_intersecting: Vec<bool>,
    /// Some pair of fins overlaps.
    pub overlapping_fins: bool,
}

impl GeometryDiagnostics {
    pub fn from_shapes(shapes: &[FinShape]) -> Self {
        let self_intersecting = shapes.iter().map(FinShape::self_intersects).collect();
        let mut overlapping_fins = false;
        'outer: for a in 0..shapes.len() {
            for b in a + 1..shapes.len() {
                if shapes[a].overlaps(&shapes[b]) {
                    overlapping_fins = true;
                    break 'outer;
                }
            }
        }
        Self {
            self_intersecting,
            overlapping_fins,
        }
    }

    pub fn any_self_intersecting(&self) -> bool {
        self.self_intersecting.iter().any(|&b| b)
    }
}

/// Decoded fins plus their validity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedGeometry {
    pub fins: Vec<FinShape>,
    pub diagnostics: GeometryDiagnostics,
}

/// Turns a decision vector into closed fin contours.
pub fn decode(x: &DecisionVector, geom: &GeometryParams) -> Result<DecodedGeometry, GeometryError> {
    geom.validate()?;
    if x.as_slice().len() != geom.dimension() {
        return Err(GeometryError::DimensionMismatch {
            expected: geom.dimension(),
            got: x.as_slice().len(),
        });
    }
    let fins = x
        .fin_params(geom)
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let segs = fin_segments(p, geom).map_err(|e| relabel_fin(e, f))?;
            FinShape::new(segs, geom.samples_per_segment).map_err(|e| match e {
                GeometryError::OpenContour { segment, .. } => GeometryError::OpenContour { fin: f, segment },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let diagnostics = GeometryDiagnostics::from_shapes(&fins);
    Ok(DecodedGeometry { fins, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn unit_params(m: usize) -> GeometryParams {
        GeometryParams {
            n_fins: 1,
            m_vertices: m,
            r_max: 1.0,
            r_mid: 1.0,
            design_domain: Rect::new(-2.0, 2.0, -2.0, 2.0),
            samples_per_segment: 64,
        }
    }

    fn fin(dr: &[f64], dtheta: &[f64], eta: &[f64]) -> FinParams {
        FinParams {
            x_shift: 0.0,
            y_shift: 0.0,
            vertices: dr
                .iter()
                .zip(dtheta)
                .zip(eta)
                .map(|((&dr, &dtheta), &eta)| VertexDeformation { dr, dtheta, eta })
                .collect(),
        }
    }

    #[test]
    fn unperturbed_vertices_on_unit_circle() {
        let v = primary_vertices(&fin(&[1.0; 4], &[0.0; 4], &[0.0; 4]), &unit_params(4));
        let expect = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, e) in v.iter().zip(expect) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn angular_offset_spans_half_spacing() {
        let v = primary_vertices(&fin(&[1.0; 4], &[1.0, 0.0, 0.0, 0.0], &[0.0; 4]), &unit_params(4));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(v[0].x, h, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0].y, h, epsilon = 1e-15);
    }

    #[test]
    fn negative_radial_scale_uses_magnitude() {
        let v = primary_vertices(&fin(&[-0.5, 1.0, 1.0, 1.0], &[0.0; 4], &[0.0; 4]), &unit_params(4));
        assert_abs_diff_eq!(v[0].norm(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[0].x, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn shift_translates_vertices() {
        let mut f = fin(&[1.0; 4], &[0.0; 4], &[0.0; 4]);
        f.x_shift = 3.0;
        f.y_shift = -1.0;
        let v = primary_vertices(&f, &unit_params(4));
        assert_abs_diff_eq!(v[1].x, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].y, 0.0, epsilon = 1e-15);
    }

    /// Heading of the weighted mean of two unit vectors.
    fn unit_vector_blend(phi_out: f64, phi_in: f64, w: f64) -> f64 {
        (Vec2::from_angle(phi_out) * w + Vec2::from_angle(phi_in) * (1.0 - w)).heading()
    }

    /// Triangle-free probe: vertices chosen so that the edge into vertex 1
    /// has heading `phi_in` and the edge out of it has heading `phi_out`.
    fn probe(phi_in: f64, phi_out: f64) -> Vec<Vec2> {
        let p1 = Vec2::new(0.0, 0.0);
        let p0 = p1 - Vec2::from_angle(phi_in);
        let p2 = p1 + Vec2::from_angle(phi_out);
        vec![p0, p1, p2]
    }

    #[test]
    fn full_weight_follows_outgoing_edge() {
        let v = probe(1.0, 2.0);
        let t = blended_tangents(&v, &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t[1], 2.0, epsilon = 1e-12);
        // also across the branch cut
        let v = probe(6.2, 0.1);
        let t = blended_tangents(&v, &[0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn equal_weight_average_without_cut() {
        let v = probe(FRAC_PI_2, 0.0);
        let t = blended_tangents(&v, &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(t[1], FRAC_PI_4, epsilon = 1e-12);
    }

    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn branch_cut_matches_unit_vector_average() {
        let v = probe(6.2, 0.1);
        let t = blended_tangents(&v, &[0.0; 3]).unwrap();
        let oracle = unit_vector_blend(0.1, 6.2, 0.5);
        assert_abs_diff_eq!(t[1], oracle, epsilon = 1e-12);
        // the literal "+π" form gives the same angle for equal weights
        assert_abs_diff_eq!(t[1], wrap_angle(0.5 * 0.1 + 0.5 * 6.2 + PI), epsilon = 1e-12);
    }

    #[test]
    fn coincident_vertices_are_degenerate() {
        let v = vec![Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(matches!(
            blended_tangents(&v, &[0.0; 3]),
            Err(GeometryError::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn intermediate_point_examples() {
        let (p1, p2) = intermediate_points(Vec2::ZERO, Vec2::new(1.0, 0.0), 0.0, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(p1.x, 0.3535, epsilon = 1e-12);
        assert_abs_diff_eq!(p1.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p2.x, 0.6465, epsilon = 1e-12);
        assert_abs_diff_eq!(p2.y, 0.0, epsilon = 1e-12);

        let (p1, _) = intermediate_points(Vec2::ZERO, Vec2::new(0.0, 1.0), 0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(p1.x, 0.707, epsilon = 1e-15);

        let a = Vec2::new(0.2, 0.3);
        let b = Vec2::new(1.0, -0.4);
        let (p1, p2) = intermediate_points(a, b, 1.0, 2.0, 0.0).unwrap();
        assert_eq!(p1, a);
        assert_eq!(p2, b);

        assert!(matches!(
            intermediate_points(a, a, 0.0, 0.0, 1.0),
            Err(GeometryError::DegenerateGeometry { .. })
        ));
    }

    fn two_fin_params() -> GeometryParams {
        GeometryParams {
            n_fins: 2,
            m_vertices: 4,
            r_max: 1.0e-3,
            r_mid: 1.0,
            design_domain: Rect::new(0.0, 5e-3, 0.0, 5e-3),
            samples_per_segment: 64,
        }
    }

    #[test]
    fn dimension_for_two_fins_of_four_vertices() {
        let g = two_fin_params();
        assert_eq!(g.dimension(), 28);
        assert!(matches!(
            DecisionVector::new(vec![0.0; 27], &g),
            Err(GeometryError::DimensionMismatch { expected: 28, got: 27 })
        ));
        let mut v = vec![0.5; 28];
        v[5] = f64::NAN;
        assert!(matches!(
            DecisionVector::new(v, &g),
            Err(GeometryError::NonFinite { index: 5 })
        ));
    }

    #[test]
    fn zero_radii_collapse() {
        let g = two_fin_params();
        let x = DecisionVector::new(vec![0.0; 28], &g).unwrap();
        assert!(matches!(
            decode(&x, &g),
            Err(GeometryError::DegenerateGeometry { fin: 0, .. })
        ));
    }

    #[test]
    fn decode_clamps_angle_and_eta() {
        let g = two_fin_params();
        let mut v = vec![0.0; 28];
        for f in 0..2 {
            for i in 0..4 {
                let b = 4 + 12 * f + 3 * i;
                v[b] = 1.0;
                v[b + 1] = 7.0;
                v[b + 2] = -3.0;
            }
        }
        let x = DecisionVector::new(v, &g).unwrap();
        let p = x.fin_params(&g);
        assert!(p[0].vertices.iter().all(|d| d.dtheta == 1.0 && d.eta == 0.0));
    }

    #[test]
    fn shifts_map_onto_design_domain() {
        let g = two_fin_params();
        let mut v = vec![1.0; 28];
        v[0] = -1.0;
        v[1] = 1.0;
        v[2] = 0.0;
        v[3] = 0.5;
        let p = DecisionVector::new(v, &g).unwrap().fin_params(&g);
        assert_abs_diff_eq!(p[0].x_shift, 0.0, epsilon = 1e-18);
        assert_abs_diff_eq!(p[1].x_shift, 5e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(p[0].y_shift, 2.5e-3, epsilon = 1e-18);
        assert_abs_diff_eq!(p[1].y_shift, 3.75e-3, epsilon = 1e-18);
    }

    #[test]
    fn decoded_fins_are_closed_and_smooth() {
        let g = two_fin_params();
        let mut v = vec![0.0, 0.0, -0.5, 0.5];
        for f in 0..2 {
            for i in 0..4 {
                v.extend_from_slice(&[0.6 + 0.1 * i as f64, 0.2 * f as f64 - 0.1, 0.3]);
            }
        }
        let d = decode(&DecisionVector::new(v, &g).unwrap(), &g).unwrap();
        assert_eq!(d.fins.len(), 2);
        for fin in &d.fins {
            let segs = &fin.segments;
            for i in 0..segs.len() {
                let next = &segs[(i + 1) % segs.len()];
                assert_eq!(segs[i].p3, next.p0);
                let a = segs[i].derivative(1.0).heading();
                let b = next.derivative(0.0).heading();
                let diff = (a - b).abs();
                assert!(diff.min(TAU - diff) < 1e-9, "join {i}: {a} vs {b}");
            }
        }
        assert!(!d.diagnostics.overlapping_fins);
        assert!(!d.diagnostics.any_self_intersecting());
    }

    #[test]
    fn params_validation() {
        let mut g = two_fin_params();
        g.r_mid = 1.5;
        assert!(g.validate().is_err());
        let mut g = two_fin_params();
        g.m_vertices = 2;
        assert!(g.validate().is_err());
        let mut g = two_fin_params();
        g.r_max = 0.0;
        assert!(g.validate().is_err());
    }
}

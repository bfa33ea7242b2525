use finopt_core::geometry::{
    bernstein, decode, eval_segment, CubicSegment, DecisionVector, GeometryError, GeometryParams,
};
use finopt_core::{Rect, Vec2};
use proptest::prelude::*;

fn params() -> GeometryParams {
    GeometryParams {
        n_fins: 2,
        m_vertices: 4,
        r_max: 2.5e-3,
        r_mid: 1.0,
        design_domain: Rect::new(0.0, 10e-3, 0.0, 5e-3),
        samples_per_segment: 16,
    }
}

fn decision_vector() -> impl Strategy<Value = Vec<f64>> {
    let g = params();
    let shifts = prop::collection::vec(-1.5..1.5f64, 2 * g.n_fins);
    let triplets = prop::collection::vec((-1.5..1.5f64, -1.5..1.5f64, -0.5..1.5f64), g.m_vertices * g.n_fins);
    (shifts, triplets).prop_map(|(mut x, t)| {
        for (dr, dtheta, eta) in t {
            x.extend([dr, dtheta, eta]);
        }
        x
    })
}

fn point() -> impl Strategy<Value = Vec2> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

fn segment() -> impl Strategy<Value = CubicSegment> {
    (point(), point(), point(), point()).prop_map(|(a, b, c, d)| CubicSegment::new(a, b, c, d))
}

/// Convex hull in counter-clockwise order (Andrew's monotone chain).
fn convex_hull(mut pts: Vec<Vec2>) -> Vec<Vec2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let turn = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(hull: &[Vec2], p: Vec2, tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (p - hull[0]).norm() <= tol,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let d = b - a;
            let t = ((p - a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
            (a + d * t - p).norm() <= tol
        }
        n => (0..n).all(|i| {
            let a = hull[i];
            let b = hull[(i + 1) % n];
            let e = b - a;
            e.cross(p - a) >= -tol * e.norm()
        }),
    }
}

fn angle_between(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b)).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn bernstein_basis_sums_to_one(t in 0.0..=1.0f64, n in 1usize..12) {
        let sum: f64 = (0..=n).map(|i| bernstein(i, n, t).unwrap()).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum} at t {t}, n {n}");
    }

    #[test]
    fn segments_interpolate_their_endpoints(seg in segment()) {
        prop_assert_eq!(eval_segment(&seg, 0.0).unwrap(), seg.p0);
        prop_assert_eq!(eval_segment(&seg, 1.0).unwrap(), seg.p3);
    }

    #[test]
    fn segment_stays_in_control_hull(seg in segment(), t in 0.0..=1.0f64) {
        let hull = convex_hull(seg.control_points().to_vec());
        let p = eval_segment(&seg, t).unwrap();
        prop_assert!(inside_hull(&hull, p, 1e-12), "{p:?} outside {hull:?}");
    }

    #[test]
    fn decoded_contours_are_closed_and_g1(x in decision_vector()) {
        let g = params();
        let dv = DecisionVector::new(x, &g).unwrap();
        match decode(&dv, &g) {
            Ok(d) => {
                prop_assert_eq!(d.fins.len(), g.n_fins);
                for fin in &d.fins {
                    let segs = &fin.segments;
                    prop_assert_eq!(segs.len(), g.m_vertices);
                    for i in 0..segs.len() {
                        let next = &segs[(i + 1) % segs.len()];
                        prop_assert_eq!(segs[i].p3, next.p0);
                        let angle = angle_between(segs[i].derivative(1.0), next.derivative(0.0));
                        prop_assert!(angle < 1e-9, "join {i}: tangent angle {angle:e} rad");
                    }
                    prop_assert_eq!(fin.polyline.first(), fin.polyline.last());
                }
            }
            Err(e) => prop_assert!(matches!(e, GeometryError::DegenerateGeometry { .. }), "{e}"),
        }
    }

    #[test]
    fn decoding_is_deterministic(x in decision_vector()) {
        let g = params();
        let dv = DecisionVector::new(x, &g).unwrap();
        let a = decode(&dv, &g);
        let b = decode(&dv.clone(), &g);
        prop_assert_eq!(&a, &b);
        if let (Ok(a), Ok(b)) = (a, b) {
            for (fa, fb) in a.fins.iter().zip(&b.fins) {
                let bits = |f: &finopt_core::geometry::FinShape| {
                    f.polyline.iter().flat_map(|p| [p.x.to_bits(), p.y.to_bits()]).collect::<Vec<_>>()
                };
                prop_assert_eq!(bits(fa), bits(fb));
            }
        }
    }
}

#[test]
fn hull_oracle_sanity() {
    let square = convex_hull(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
        Vec2::new(0.5, 0.5),
    ]);
    assert_eq!(square.len(), 4);
    assert!(inside_hull(&square, Vec2::new(0.5, 0.9), 0.0));
    assert!(!inside_hull(&square, Vec2::new(1.1, 0.5), 1e-12));
}

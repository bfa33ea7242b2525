use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::math::{Rect, Vec2};

/// Bernstein basis polynomial `C(n, i) (1 - t)^(n - i) t^i`.
pub fn bernstein(i: usize, n: usize, t: f64) -> Result<f64, GeometryError> {
    if i > n {
        return Err(GeometryError::Domain(format!("basis index {i} exceeds degree {n}")));
    }
    check_parameter(t)?;
    Ok(binomial(n, i) * (1.0 - t).powi((n - i) as i32) * t.powi(i as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn check_parameter(t: f64) -> Result<(), GeometryError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(GeometryError::Domain(format!("curve parameter {t} outside [0, 1]")))
    }
}

/// One cubic Bézier segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicSegment {
    pub p0: Vec2,
    pub p1: Vec2,
    pub p2: Vec2,
    pub p3: Vec2,
}

impl CubicSegment {
    pub const fn new(p0: Vec2, p1: Vec2, p2: Vec2, p3: Vec2) -> Self {
        Self { p0, p1, p2, p3 }
    }

    /// A straight segment from `a` to `b` with interior control points at thirds.
    pub fn line(a: Vec2, b: Vec2) -> Self {
        let d = b - a;
        Self::new(a, a + d * (1.0 / 3.0), a + d * (2.0 / 3.0), b)
    }

    pub fn control_points(&self) -> [Vec2; 4] {
        [self.p0, self.p1, self.p2, self.p3]
    }

    pub fn is_finite(&self) -> bool {
        self.control_points().iter().all(|p| p.is_finite())
    }

    /// Evaluates without the range check; `t` must lie in `[0, 1]`.
    ///
    /// The endpoint weights vanish exactly at `t = 0` and `t = 1`, so those
    /// evaluations return `p0` and `p3` bit for bit.
    #[inline]
    pub(crate) fn point_at(&self, t: f64) -> Vec2 {
        let s = 1.0 - t;
        let b0 = s * s * s;
        let b1 = 3.0 * s * s * t;
        let b2 = 3.0 * s * t * t;
        let b3 = t * t * t;
        Vec2::new(
            b0 * self.p0.x + b1 * self.p1.x + b2 * self.p2.x + b3 * self.p3.x,
            b0 * self.p0.y + b1 * self.p1.y + b2 * self.p2.y + b3 * self.p3.y,
        )
    }

    /// First derivative with respect to `t`.
    pub fn derivative(&self, t: f64) -> Vec2 {
        let s = 1.0 - t;
        (self.p1 - self.p0) * (3.0 * s * s) + (self.p2 - self.p1) * (6.0 * s * t) + (self.p3 - self.p2) * (3.0 * t * t)
    }

    /// Tight bounding box from the endpoints and the interior extrema.
    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect::bounding([self.p0, self.p3]).expect("two points");
        let d0 = self.p1 - self.p0;
        let d1 = self.p2 - self.p1;
        let d2 = self.p3 - self.p2;
        let mut roots = Vec::with_capacity(4);
        quadratic_roots_in_unit(d0.x - 2.0 * d1.x + d2.x, 2.0 * (d1.x - d0.x), d0.x, &mut roots);
        quadratic_roots_in_unit(d0.y - 2.0 * d1.y + d2.y, 2.0 * (d1.y - d0.y), d0.y, &mut roots);
        for t in roots {
            r.include(self.point_at(t));
        }
        r
    }
}

/// Evaluates a cubic segment at `t ∈ [0, 1]`.
pub fn eval_segment(seg: &CubicSegment, t: f64) -> Result<Vec2, GeometryError> {
    check_parameter(t)?;
    Ok(seg.point_at(t))
}

fn quadratic_roots_in_unit(a: f64, b: f64, c: f64, out: &mut Vec<f64>) {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return;
    }
    let mut push = |t: f64| {
        if t > 0.0 && t < 1.0 {
            out.push(t);
        }
    };
    if a.abs() <= 1e-12 * scale {
        if b != 0.0 {
            push(-c / b);
        }
        return;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return;
    }
    let sq = disc.sqrt();
    // roots as q / a and c / q
    let q = -0.5 * (b + b.signum() * sq);
    if q != 0.0 {
        push(q / a);
        push(c / q);
    } else {
        push(0.0);
    }
}

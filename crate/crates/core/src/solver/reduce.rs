use crate::grid::{CellMask, StructuredGrid};

/// Line-averaged inlet pressure minus line-averaged outlet pressure.
///
/// Boundary pressures are extrapolated linearly from the first two cell
/// centres of each row; rows where either cell is solid are skipped.
pub fn pressure_loss(p: &[f64], mask: &CellMask, grid: &StructuredGrid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let boundary = |a: usize, b: usize| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for j in 0..ny {
            if mask.is_solid(a, j) || mask.is_solid(b, j) {
                continue;
            }
            sum += 1.5 * p[j * nx + a] - 0.5 * p[j * nx + b];
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };
    boundary(0, 1) - boundary(nx - 1, nx - 2)
}

/// Area-weighted mean of a field on uniform cells.
pub fn average_temperature(t: &[f64]) -> f64 {
    if t.is_empty() {
        return f64::NAN;
    }
    t.iter().sum::<f64>() / t.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rect;
    use approx::assert_abs_diff_eq;

    fn grid() -> StructuredGrid {
        StructuredGrid::new(Rect::new(0.0, 0.01, 0.0, 0.005), 32, 16)
    }

    #[test]
    fn uniform_pressure_has_no_loss() {
        let g = grid();
        let p = vec![3.7; g.len()];
        assert_abs_diff_eq!(
            pressure_loss(&p, &CellMask::all_fluid(32, 16), &g),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn linear_ramp_gives_slope_times_length() {
        let g = grid();
        let a = 250.0;
        let mut p = vec![0.0; g.len()];
        for j in 0..16 {
            for i in 0..32 {
                p[j * 32 + i] = a * (0.01 - g.cell_center(i, j).x);
            }
        }
        assert_abs_diff_eq!(
            pressure_loss(&p, &CellMask::all_fluid(32, 16), &g),
            a * 0.01,
            epsilon = 1e-12
        );
    }

    #[test]
    fn inlet_to_outlet_difference() {
        let g = grid();
        let mut p = vec![0.0; g.len()];
        for j in 0..16 {
            p[j * 32] = 1.096;
            p[j * 32 + 1] = 1.096;
        }
        assert_abs_diff_eq!(
            pressure_loss(&p, &CellMask::all_fluid(32, 16), &g),
            1.096,
            epsilon = 1e-14
        );
    }

    #[test]
    fn averages() {
        assert_eq!(average_temperature(&[5.0; 7]), 5.0);
        let g = grid();
        let (a, b) = (300.0, 2000.0);
        let t: Vec<f64> = (0..g.len()).map(|k| a + b * g.cell_center(k % 32, k / 32).x).collect();
        assert_abs_diff_eq!(average_temperature(&t), a + b * 0.005, epsilon = 1e-10);
    }
}

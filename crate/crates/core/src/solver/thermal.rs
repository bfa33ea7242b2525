use serde::{Deserialize, Serialize};

use super::flow::FlowField;
use super::sparse::{solve_in_place, SparsePattern};
use super::{DomainSpec, FlowTolerances, PhysicalProps, SideBoundary, SolverError};
use crate::grid::CellMask;

/// How the fin-layer and base-plate temperatures are coupled.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThermalCoupling {
    /// Both layers in one sparse direct solve.
    #[default]
    Monolithic,
    /// Alternating layer solves with under-relaxation, stopped when no
    /// temperature moves by more than `tolerance` kelvin.
    Picard { relaxation: f64, tolerance: f64 },
}

impl ThermalCoupling {
    pub fn picard() -> Self {
        ThermalCoupling::Picard {
            relaxation: 0.8,
            tolerance: 1e-6,
        }
    }
}

/// Converged temperatures and energy bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField {
    /// Fin-layer temperature at every cell centre [K].
    pub t: Vec<f64>,
    /// Base-plate temperature on the design subgrid [K].
    pub t_bp: Vec<f64>,
    /// Heat passed from each base-plate cell to the cell above it [W].
    pub exchange: Vec<f64>,
    /// Heat generated in the base plate [W].
    pub heat_in: f64,
    /// Enthalpy leaving through the outlet minus enthalpy entering [W].
    pub enthalpy_rise: f64,
    pub energy_closure: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl ThermalField {
    /// Total heat received by the fin layer and total heat given up by the
    /// base plate, each summed over its own layer.
    pub fn layer_exchange_totals(&self) -> (f64, f64) {
        let gained: f64 = self.exchange.iter().sum();
        let lost: f64 = self.exchange.iter().map(|q| -q).sum();
        (gained, lost)
    }
}

struct System {
    n_t: usize,
    entries: Vec<(usize, usize)>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    /// Per base-plate cell: fin-layer cell index and exchange conductance.
    links: Vec<(usize, f64)>,
}

impl System {
    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c));
        self.vals.push(v);
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r: Vec<f64> = self.rhs.iter().map(|b| -b).collect();
        for (&(i, j), &v) in self.entries.iter().zip(&self.vals) {
            r[i] += v * x[j];
        }
        r
    }

    /// Largest residual relative to the largest row of `|A| |x| + |b|`.
    fn relative_residual(&self, x: &[f64]) -> f64 {
        let mut size: Vec<f64> = self.rhs.iter().map(|b| b.abs()).collect();
        for (&(i, j), &v) in self.entries.iter().zip(&self.vals) {
            size[i] += (v * x[j]).abs();
        }
        max_abs(&self.residual(x)) / max_abs(&size)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn assemble(flow: &FlowField, mask: &CellMask, props: &PhysicalProps, dom: &DomainSpec) -> System {
    let grid = dom.grid();
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx(), grid.dy());
    let area = dx * dy;
    let walls = dom.sides == SideBoundary::Walls;
    let (xs, ys) = dom.design_cells();
    let (mx, my) = (xs.len(), ys.len());
    let n_t = nx * ny;
    let mut s = System {
        n_t,
        entries: Vec::new(),
        vals: Vec::new(),
        rhs: vec![0.0; n_t + mx * my],
        links: Vec::with_capacity(mx * my),
    };
    let cap = props.rho_f * props.c_f * props.dz_ch;
    let k = |i: usize, j: usize| if mask.is_solid(i, j) { props.k_s } else { props.k_f };

    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let kp = k(i, j);
            let mut diag = 0.0;

            // advection, outward fluxes
            let fe = flow.u[j * (nx + 1) + i + 1] * dy * cap;
            let fw = -flow.u[j * (nx + 1) + i] * dy * cap;
            if i + 1 == nx {
                diag += fe;
            } else {
                diag += fe.max(0.0);
                s.add(c, c + 1, fe.min(0.0));
            }
            if i == 0 {
                diag += fw.max(0.0);
                s.rhs[c] -= fw.min(0.0) * props.t_in;
            } else {
                diag += fw.max(0.0);
                s.add(c, c - 1, fw.min(0.0));
            }
            if !walls || j + 1 < ny {
                let jn = (j + 1) % ny;
                let fnorth = flow.v[jn * nx + i] * dx * cap;
                diag += fnorth.max(0.0);
                s.add(c, jn * nx + i, fnorth.min(0.0));
            }
            if !walls || j > 0 {
                let js = (j + ny - 1) % ny;
                let fsouth = -flow.v[j * nx + i] * dx * cap;
                diag += fsouth.max(0.0);
                s.add(c, js * nx + i, fsouth.min(0.0));
            }

            // conduction
            if i + 1 < nx {
                let g = props.dz_ch * harmonic(kp, k(i + 1, j)) * dy / dx;
                diag += g;
                s.add(c, c + 1, -g);
            }
            if i > 0 {
                let g = props.dz_ch * harmonic(kp, k(i - 1, j)) * dy / dx;
                diag += g;
                s.add(c, c - 1, -g);
            } else {
                let g = props.dz_ch * kp * dy / (0.5 * dx);
                diag += g;
                s.rhs[c] += g * props.t_in;
            }
            if !walls || j + 1 < ny {
                let jn = (j + 1) % ny;
                let g = props.dz_ch * harmonic(kp, k(i, jn)) * dx / dy;
                diag += g;
                s.add(c, jn * nx + i, -g);
            }
            if !walls || j > 0 {
                let js = (j + ny - 1) % ny;
                let g = props.dz_ch * harmonic(kp, k(i, js)) * dx / dy;
                diag += g;
                s.add(c, js * nx + i, -g);
            }
            s.add(c, c, diag);
        }
    }

    let full_width = my == ny;
    let g_x = props.k_s * props.dz_bp * dy / dx;
    let g_y = props.k_s * props.dz_bp * dx / dy;
    for (b, j) in ys.clone().enumerate() {
        for (a, i) in xs.clone().enumerate() {
            let r = n_t + b * mx + a;
            let c = j * nx + i;
            let h = if mask.is_solid(i, j) { props.h_s } else { props.h_f };
            let g_ex = h * area;
            s.links.push((c, g_ex));
            // exchange: fin layer gains g (T_bp - T), base plate loses it
            s.add(c, c, g_ex);
            s.add(c, r, -g_ex);
            let mut diag = g_ex;
            s.add(r, c, -g_ex);
            if a + 1 < mx {
                diag += g_x;
                s.add(r, r + 1, -g_x);
            }
            if a > 0 {
                diag += g_x;
                s.add(r, r - 1, -g_x);
            }
            if b + 1 < my || full_width {
                let bn = (b + 1) % my;
                diag += g_y;
                s.add(r, n_t + bn * mx + a, -g_y);
            }
            if b > 0 || full_width {
                let bs = (b + my - 1) % my;
                diag += g_y;
                s.add(r, n_t + bs * mx + a, -g_y);
            }
            s.add(r, r, diag);
            s.rhs[r] += props.q_gen * area;
        }
    }
    s
}

fn non_convergence(iterations: usize, residual: f64, history: &[f64]) -> SolverError {
    SolverError::NonConvergence {
        iterations,
        residual,
        history: history.to_vec(),
    }
}

/// Solves both temperature layers for a converged flow.
pub fn solve_thermal(
    flow: &FlowField,
    mask: &CellMask,
    props: &PhysicalProps,
    dom: &DomainSpec,
    tol: &FlowTolerances,
    coupling: ThermalCoupling,
) -> Result<ThermalField, SolverError> {
    props.validate()?;
    dom.validate()?;
    faer::set_global_parallelism(faer::Par::Seq);
    let grid = dom.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let sys = assemble(flow, mask, props, dom);
    let n = sys.rhs.len();
    let area = grid.cell_area();

    let (x, iterations, history) = match coupling {
        ThermalCoupling::Monolithic => {
            let pattern = SparsePattern::new(n, sys.entries.clone())
                .map_err(|e| SolverError::InvalidInput(format!("thermal matrix: {}", e.0)))?;
            let lu = pattern
                .factor(&sys.vals)
                .map_err(|_| non_convergence(0, f64::INFINITY, &[]))?;
            let mut x = sys.rhs.clone();
            solve_in_place(&lu, &mut x);
            // one step of iterative refinement
            let r = sys.residual(&x);
            let mut d: Vec<f64> = r.iter().map(|v| -v).collect();
            solve_in_place(&lu, &mut d);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            let res = sys.relative_residual(&x);
            (x, 1, vec![res])
        }
        ThermalCoupling::Picard { relaxation, tolerance } => picard(&sys, props, relaxation, tolerance, tol)?,
    };

    let res = sys.relative_residual(&x);
    let residual_ok = matches!(coupling, ThermalCoupling::Picard { .. }) || res < tol.thermal;
    if !x.iter().all(|v| v.is_finite()) || !residual_ok {
        return Err(non_convergence(iterations, res, &history));
    }
    let t = x[..nx * ny].to_vec();
    let t_bp = x[nx * ny..].to_vec();
    let exchange: Vec<f64> = sys
        .links
        .iter()
        .zip(&t_bp)
        .map(|(&(c, g), &tb)| g * (tb - t[c]))
        .collect();
    let heat_in = props.q_gen * area * t_bp.len() as f64;
    let cap = props.rho_f * props.c_f * props.dz_ch * grid.dy();
    let enthalpy_rise: f64 = (0..ny)
        .map(|j| cap * (flow.u[j * (nx + 1) + nx] * t[j * nx + nx - 1] - flow.u[j * (nx + 1)] * props.t_in))
        .sum();
    let energy_closure = if heat_in > 0.0 {
        (heat_in - enthalpy_rise).abs() / heat_in
    } else {
        0.0
    };
    if !(energy_closure < 0.5) {
        return Err(non_convergence(iterations, res, &history));
    }
    Ok(ThermalField {
        t,
        t_bp,
        exchange,
        heat_in,
        enthalpy_rise,
        energy_closure,
        iterations,
        history,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter()
        .fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

type PicardOutcome = (Vec<f64>, usize, Vec<f64>);

fn picard(
    sys: &System,
    props: &PhysicalProps,
    relaxation: f64,
    tolerance: f64,
    tol: &FlowTolerances,
) -> Result<PicardOutcome, SolverError> {
    let n_t = sys.n_t;
    let n = sys.rhs.len();
    let n_b = n - n_t;
    let mut ch = (Vec::new(), Vec::new());
    let mut bp = (Vec::new(), Vec::new());
    for (&(r, c), &v) in sys.entries.iter().zip(&sys.vals) {
        if r < n_t && c < n_t {
            ch.0.push((r, c));
            ch.1.push(v);
        } else if r >= n_t && c >= n_t {
            bp.0.push((r - n_t, c - n_t));
            bp.1.push(v);
        }
    }
    let ch_pattern = SparsePattern::new(n_t, ch.0).map_err(|e| SolverError::InvalidInput(e.0))?;
    let bp_pattern = SparsePattern::new(n_b, bp.0).map_err(|e| SolverError::InvalidInput(e.0))?;
    let ch_lu = ch_pattern
        .factor(&ch.1)
        .map_err(|_| non_convergence(0, f64::INFINITY, &[]))?;
    let bp_lu = bp_pattern
        .factor(&bp.1)
        .map_err(|_| non_convergence(0, f64::INFINITY, &[]))?;

    let mut x = vec![props.t_in; n];
    let mut history = Vec::new();
    for it in 1..=tol.max_thermal_iterations {
        let mut change = 0.0f64;
        // fin layer with the base plate frozen
        let mut b: Vec<f64> = sys.rhs[..n_t].to_vec();
        for (bp_cell, &(c, g)) in sys.links.iter().enumerate() {
            b[c] += g * x[n_t + bp_cell];
        }
        solve_in_place(&ch_lu, &mut b);
        for (xi, &new) in x[..n_t].iter_mut().zip(&b) {
            let next = *xi + relaxation * (new - *xi);
            change = change.max((next - *xi).abs());
            *xi = next;
        }
        // base plate with the fin layer frozen
        let mut b: Vec<f64> = sys.rhs[n_t..].to_vec();
        for (bp_cell, &(c, g)) in sys.links.iter().enumerate() {
            b[bp_cell] += g * x[c];
        }
        solve_in_place(&bp_lu, &mut b);
        for (xi, &new) in x[n_t..].iter_mut().zip(&b) {
            let next = *xi + relaxation * (new - *xi);
            change = if next.is_finite() {
                change.max((next - *xi).abs())
            } else {
                f64::NAN
            };
            *xi = next;
        }
        history.push(sys.relative_residual(&x));
        if change.is_nan() {
            return Err(non_convergence(it, f64::NAN, &history));
        }
        if change < tolerance {
            return Ok((x, it, history));
        }
    }
    Err(non_convergence(
        tol.max_thermal_iterations,
        history.last().copied().unwrap_or(f64::NAN),
        &history,
    ))
}

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::sparse::{solve_in_place, SparsePattern};
use super::{worst_of, DomainSpec, FlowTolerances, PhysicalProps, SideBoundary, SolverError};
use crate::grid::CellMask;

/// Algorithm used for the steady flow equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    /// Fully coupled Newton iteration with a direct sparse solve per step.
    #[default]
    Newton,
    /// Segregated pressure-correction iteration.
    Simple,
}

/// Converged velocity and pressure fields.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    /// Streamwise velocity on `(nx + 1) × ny` faces, row-major.
    pub u: Vec<f64>,
    /// Transverse velocity on the `nx × ny` faces below each cell.
    pub v: Vec<f64>,
    /// Cell-centred pressure; zero outside the flow region.
    pub p: Vec<f64>,
    /// Cells connected to the outlet through fluid.
    pub active: Vec<bool>,
    pub iterations: usize,
    pub mass_history: Vec<f64>,
    pub momentum_history: Vec<f64>,
}

pub(crate) const NONE: usize = usize::MAX;

/// A value that is either an unknown (`id`) or fixed (`id == NONE`).
#[derive(Clone, Copy)]
pub(crate) struct Var {
    pub val: f64,
    pub id: usize,
}

impl Var {
    pub const ZERO: Var = Var { val: 0.0, id: NONE };
}

/// Residual plus Jacobian values in a fixed entry order.
pub(crate) struct Assembly {
    pub res: Vec<f64>,
    pub vals: Vec<f64>,
    pub entries: Option<Vec<(usize, usize)>>,
}

impl Assembly {
    fn new(n: usize, record: bool) -> Self {
        Self {
            res: vec![0.0; n],
            vals: Vec::new(),
            entries: record.then(Vec::new),
        }
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, v: f64) {
        if col == NONE {
            return;
        }
        if let Some(e) = self.entries.as_mut() {
            e.push((row, col));
        }
        self.vals.push(v);
    }

    /// Upwind convection of `p` through a face with outward mass flux
    /// `fc (fa + fb)`, plus diffusion `d (p - nb)` towards the neighbour.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn face(&mut self, row: usize, p: Var, nb: Var, fc: f64, fa: Var, fb: Var, d: f64, newton: bool) {
        let f = fc * (fa.val + fb.val);
        self.res[row] += f.max(0.0) * p.val + f.min(0.0) * nb.val + d * (p.val - nb.val);
        self.add(row, p.id, f.max(0.0) + d);
        self.add(row, nb.id, f.min(0.0) - d);
        let up = if f >= 0.0 { p.val } else { nb.val };
        let g = if newton { up * fc } else { 0.0 };
        self.add(row, fa.id, g);
        self.add(row, fb.id, g);
    }

    #[inline]
    fn pressure(&mut self, row: usize, pe: Var, pw: Var, len: f64) {
        self.res[row] += (pe.val - pw.val) * len;
        self.add(row, pe.id, len);
        self.add(row, pw.id, -len);
    }
}

/// Staggered finite-volume discretisation of the steady incompressible
/// equations on a masked Cartesian grid.
///
/// Velocities live on cell faces and pressure at cell centres. Faces touching
/// a solid (or unreachable) cell carry zero velocity. Convection is first-order
/// upwind. The inlet face column carries the prescribed profile, the outlet
/// has zero pressure and zero velocity gradient, and the sides are either
/// periodic or no-slip walls.
pub(crate) struct FlowProblem {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub rho: f64,
    pub mu: f64,
    pub u_ref: f64,
    pub walls: bool,
    pub inlet: Vec<f64>,
    pub active: Vec<bool>,
    pub u_id: Vec<usize>,
    pub v_id: Vec<usize>,
    pub p_id: Vec<usize>,
    pub n_u: usize,
    pub n_v: usize,
    pub n_p: usize,
}

impl FlowProblem {
    pub fn new(mask: &CellMask, props: &PhysicalProps, dom: &DomainSpec) -> Result<Self, SolverError> {
        let (nx, ny) = (dom.nx, dom.ny);
        if mask.nx != nx || mask.ny != ny {
            return Err(SolverError::InvalidInput(format!(
                "mask is {}x{} but the domain grid is {nx}x{ny}",
                mask.nx, mask.ny
            )));
        }
        let grid = dom.grid();
        let walls = dom.sides == SideBoundary::Walls;
        let active = reachable_from_outlet(mask, walls);
        if (0..ny).all(|j| !active[j * nx]) {
            return Err(SolverError::BlockedChannel);
        }

        let inlet: Vec<f64> = (0..ny)
            .map(|j| {
                if !active[j * nx] {
                    0.0
                } else if walls {
                    // cell average of 6 ū s (1 - s), s = y / W
                    let s0 = j as f64 / ny as f64;
                    let s1 = (j + 1) as f64 / ny as f64;
                    let prim = |s: f64| 3.0 * s * s - 2.0 * s * s * s;
                    props.u_in * (prim(s1) - prim(s0)) / (s1 - s0)
                } else {
                    props.u_in
                }
            })
            .collect();

        let mut next = 0usize;
        let mut u_id = vec![NONE; (nx + 1) * ny];
        for j in 0..ny {
            for i in 1..=nx {
                let ok = if i == nx {
                    active[j * nx + nx - 1]
                } else {
                    active[j * nx + i - 1] && active[j * nx + i]
                };
                if ok {
                    u_id[j * (nx + 1) + i] = next;
                    next += 1;
                }
            }
        }
        let n_u = next;
        let mut v_id = vec![NONE; nx * ny];
        for j in 0..ny {
            if walls && j == 0 {
                continue;
            }
            let js = (j + ny - 1) % ny;
            for i in 0..nx {
                if active[j * nx + i] && active[js * nx + i] {
                    v_id[j * nx + i] = next;
                    next += 1;
                }
            }
        }
        let n_v = next - n_u;
        let mut p_id = vec![NONE; nx * ny];
        for (c, &a) in active.iter().enumerate() {
            if a {
                p_id[c] = next;
                next += 1;
            }
        }
        let n_p = next - n_u - n_v;
        Ok(Self {
            nx,
            ny,
            dx: grid.dx(),
            dy: grid.dy(),
            rho: props.rho_f,
            mu: props.mu_f,
            u_ref: props.u_in,
            walls,
            inlet,
            active,
            u_id,
            v_id,
            p_id,
            n_u,
            n_v,
            n_p,
        })
    }

    pub fn n(&self) -> usize {
        self.n_u + self.n_v + self.n_p
    }

    #[inline]
    pub fn u_var(&self, u: &[f64], i: usize, j: usize) -> Var {
        let k = j * (self.nx + 1) + i;
        Var {
            val: u[k],
            id: self.u_id[k],
        }
    }

    #[inline]
    pub fn v_var(&self, v: &[f64], i: usize, j: usize) -> Var {
        let k = j * self.nx + i;
        Var {
            val: v[k],
            id: self.v_id[k],
        }
    }

    /// Transverse velocity on the top face of row `j`.
    #[inline]
    pub fn v_top(&self, v: &[f64], i: usize, j: usize) -> Var {
        if j + 1 == self.ny {
            if self.walls {
                Var::ZERO
            } else {
                self.v_var(v, i, 0)
            }
        } else {
            self.v_var(v, i, j + 1)
        }
    }

    #[inline]
    pub fn p_var(&self, p: &[f64], i: usize, j: usize) -> Var {
        let k = j * self.nx + i;
        Var {
            val: p[k],
            id: self.p_id[k],
        }
    }

    /// Initial fields: inlet profile copied along each row, no cross flow.
    pub fn initial_fields(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.nx, self.ny);
        let mut u = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            u[j * (nx + 1)] = self.inlet[j];
            for i in 1..=nx {
                if self.u_id[j * (nx + 1) + i] != NONE {
                    u[j * (nx + 1) + i] = if self.walls { self.inlet[j] } else { self.u_ref };
                }
            }
        }
        (u, vec![0.0; nx * ny], vec![0.0; nx * ny])
    }

    pub fn gather(&self, u: &[f64], v: &[f64], p: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        for (k, &id) in self.u_id.iter().enumerate() {
            if id != NONE {
                x[id] = u[k];
            }
        }
        for (k, &id) in self.v_id.iter().enumerate() {
            if id != NONE {
                x[id] = v[k];
            }
        }
        for (k, &id) in self.p_id.iter().enumerate() {
            if id != NONE {
                x[id] = p[k];
            }
        }
        x
    }

    pub fn scatter(&self, x: &[f64], u: &mut [f64], v: &mut [f64], p: &mut [f64]) {
        for (k, &id) in self.u_id.iter().enumerate() {
            if id != NONE {
                u[k] = x[id];
            }
        }
        for (k, &id) in self.v_id.iter().enumerate() {
            if id != NONE {
                v[k] = x[id];
            }
        }
        for (k, &id) in self.p_id.iter().enumerate() {
            if id != NONE {
                p[k] = x[id];
            }
        }
    }

    /// Residuals of every equation and, unless `jac` is `None`, the
    /// Jacobian values. `Some(false)` freezes the convecting mass fluxes
    /// (Picard linearisation), `Some(true)` gives the exact derivative.
    pub fn assemble(&self, u: &[f64], v: &[f64], p: &[f64], jac: Option<bool>, record: bool) -> Assembly {
        let mut a = Assembly::new(self.n(), record);
        let newton = jac == Some(true);
        let (nx, ny, dx, dy, rho, mu) = (self.nx, self.ny, self.dx, self.dy, self.rho, self.mu);

        for j in 0..ny {
            for i in 1..=nx {
                let pv = self.u_var(u, i, j);
                if pv.id == NONE {
                    continue;
                }
                let row = pv.id;
                let half = i == nx;
                let len_x = if half { 0.5 * dx } else { dx };
                if half {
                    a.face(row, pv, pv, 0.5 * rho * dy, pv, pv, 0.0, newton);
                } else {
                    let e = self.u_var(u, i + 1, j);
                    a.face(row, pv, e, 0.5 * rho * dy, pv, e, mu * dy / dx, newton);
                }
                let w = self.u_var(u, i - 1, j);
                a.face(row, pv, w, -0.5 * rho * dy, w, pv, mu * dy / dx, newton);

                // north
                if self.walls && j + 1 == ny {
                    a.face(
                        row,
                        pv,
                        Var::ZERO,
                        0.0,
                        Var::ZERO,
                        Var::ZERO,
                        2.0 * mu * len_x / dy,
                        newton,
                    );
                } else {
                    let jn = (j + 1) % ny;
                    let nb = self.u_var(u, i, jn);
                    let d = if nb.id == NONE { 2.0 } else { 1.0 } * mu * len_x / dy;
                    let (fa, fb) = if half {
                        let vv = self.v_var(v, nx - 1, jn);
                        (vv, vv)
                    } else {
                        (self.v_var(v, i - 1, jn), self.v_var(v, i, jn))
                    };
                    a.face(row, pv, nb, 0.5 * rho * len_x, fa, fb, d, newton);
                }
                // south
                if self.walls && j == 0 {
                    a.face(
                        row,
                        pv,
                        Var::ZERO,
                        0.0,
                        Var::ZERO,
                        Var::ZERO,
                        2.0 * mu * len_x / dy,
                        newton,
                    );
                } else {
                    let js = (j + ny - 1) % ny;
                    let nb = self.u_var(u, i, js);
                    let d = if nb.id == NONE { 2.0 } else { 1.0 } * mu * len_x / dy;
                    let (fa, fb) = if half {
                        let vv = self.v_var(v, nx - 1, j);
                        (vv, vv)
                    } else {
                        (self.v_var(v, i - 1, j), self.v_var(v, i, j))
                    };
                    a.face(row, pv, nb, -0.5 * rho * len_x, fa, fb, d, newton);
                }
                let pe = if half { Var::ZERO } else { self.p_var(p, i, j) };
                a.pressure(row, pe, self.p_var(p, i - 1, j), dy);
            }
        }

        for j in 0..ny {
            let js = (j + ny - 1) % ny;
            for i in 0..nx {
                let pv = self.v_var(v, i, j);
                if pv.id == NONE {
                    continue;
                }
                let row = pv.id;
                let n = self.v_top(v, i, j);
                a.face(row, pv, n, 0.5 * rho * dx, pv, n, mu * dx / dy, newton);
                let s = self.v_var(v, i, js);
                a.face(row, pv, s, -0.5 * rho * dx, s, pv, mu * dx / dy, newton);

                let (ea, eb) = (self.u_var(u, i + 1, js), self.u_var(u, i + 1, j));
                if i + 1 == nx {
                    a.face(row, pv, pv, 0.5 * rho * dy, ea, eb, 0.0, newton);
                } else {
                    let nb = self.v_var(v, i + 1, j);
                    let d = if nb.id == NONE { 2.0 } else { 1.0 } * mu * dy / dx;
                    a.face(row, pv, nb, 0.5 * rho * dy, ea, eb, d, newton);
                }
                let (wa, wb) = (self.u_var(u, i, js), self.u_var(u, i, j));
                let nb = if i == 0 { Var::ZERO } else { self.v_var(v, i - 1, j) };
                let d = if nb.id == NONE { 2.0 } else { 1.0 } * mu * dy / dx;
                a.face(row, pv, nb, -0.5 * rho * dy, wa, wb, d, newton);

                a.pressure(row, self.p_var(p, i, j), self.p_var(p, i, js), dx);
            }
        }

        for j in 0..ny {
            for i in 0..nx {
                let row = self.p_id[j * nx + i];
                if row == NONE {
                    continue;
                }
                let ue = self.u_var(u, i + 1, j);
                let uw = self.u_var(u, i, j);
                let vn = self.v_top(v, i, j);
                let vs = self.v_var(v, i, j);
                a.res[row] += rho * ((ue.val - uw.val) * dy + (vn.val - vs.val) * dx);
                if jac.is_some() {
                    a.add(row, ue.id, rho * dy);
                    a.add(row, uw.id, -rho * dy);
                    a.add(row, vn.id, rho * dx);
                    a.add(row, vs.id, -rho * dx);
                }
            }
        }
        a
    }

    /// Largest scaled mass and momentum residuals.
    pub fn residual_norms(&self, res: &[f64]) -> (f64, f64) {
        let mom_scale = self.rho * self.u_ref * self.u_ref * self.dy;
        let mass_scale = self.rho * self.u_ref * self.dy;
        let mom = res[..self.n_u + self.n_v].iter().fold(0.0f64, |m, r| m.max(r.abs())) / mom_scale;
        let mass = res[self.n_u + self.n_v..].iter().fold(0.0f64, |m, r| m.max(r.abs())) / mass_scale;
        (mass, mom)
    }

    fn merit(&self, res: &[f64]) -> f64 {
        let mom_scale = self.rho * self.u_ref * self.u_ref * self.dy;
        let mass_scale = self.rho * self.u_ref * self.dy;
        let split = self.n_u + self.n_v;
        let a: f64 = res[..split].iter().map(|r| (r / mom_scale).powi(2)).sum();
        let b: f64 = res[split..].iter().map(|r| (r / mass_scale).powi(2)).sum();
        (a + b).sqrt()
    }
}

/// Cells connected to the outlet column through fluid faces.
fn reachable_from_outlet(mask: &CellMask, walls: bool) -> Vec<bool> {
    let (nx, ny) = (mask.nx, mask.ny);
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for j in 0..ny {
        if !mask.is_solid(nx - 1, j) {
            seen[j * nx + nx - 1] = true;
            queue.push_back((nx - 1, j));
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let mut visit = |a: usize, b: usize| {
            if !seen[b * nx + a] && !mask.is_solid(a, b) {
                seen[b * nx + a] = true;
                queue.push_back((a, b));
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < nx {
            visit(i + 1, j);
        }
        if j + 1 < ny {
            visit(i, j + 1);
        } else if !walls {
            visit(i, 0);
        }
        if j > 0 {
            visit(i, j - 1);
        } else if !walls {
            visit(i, ny - 1);
        }
    }
    seen
}

/// Solves the steady flow through the fluid cells of `mask`.
pub fn solve_flow(
    mask: &CellMask,
    props: &PhysicalProps,
    dom: &DomainSpec,
    tol: &FlowTolerances,
    method: FlowMethod,
) -> Result<FlowField, SolverError> {
    props.validate()?;
    dom.validate()?;
    let prob = FlowProblem::new(mask, props, dom)?;
    match method {
        FlowMethod::Newton => newton(&prob, tol),
        FlowMethod::Simple => super::simple::simple(&prob, tol),
    }
}

/// Number of frozen-flux iterations, always taken as full steps, before
/// switching to exact derivatives.
const PICARD_STEPS: usize = 1;

fn newton(prob: &FlowProblem, tol: &FlowTolerances) -> Result<FlowField, SolverError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let (mut u, mut v, mut p) = prob.initial_fields();
    let first = prob.assemble(&u, &v, &p, Some(false), true);
    let entries = first.entries.expect("recorded");
    let n_vel = prob.n_u + prob.n_v;
    let mut diag_slots = vec![NONE; n_vel];
    for (k, &(r, c)) in entries.iter().enumerate() {
        if r == c && r < n_vel && diag_slots[r] == NONE {
            diag_slots[r] = k;
        }
    }
    let pattern = SparsePattern::new(prob.n(), entries)
        .map_err(|e| SolverError::InvalidInput(format!("flow matrix: {}", e.0)))?;
    let inertia = prob.rho * prob.dx * prob.dy;
    let dtau0 = PTC_CFL * prob.dx.min(prob.dy) / prob.u_ref;

    let mut mass_history = Vec::new();
    let mut momentum_history = Vec::new();
    let mut x = prob.gather(&u, &v, &p);
    let mut dtau: Option<f64> = None;
    let mut failures = 0;
    let mut iter = 0;
    let mut lagged = None;
    loop {
        let jac = Some(iter >= PICARD_STEPS);
        let asm = prob.assemble(&u, &v, &p, jac, false);
        let (mass, mom) = prob.residual_norms(&asm.res);
        mass_history.push(mass);
        momentum_history.push(mom);
        if !(mass.is_finite() && mom.is_finite()) {
            return Err(SolverError::NonConvergence {
                iterations: iter,
                residual: f64::NAN,
                history: worst_of(&mass_history, &momentum_history),
            });
        }
        if mass < tol.mass && mom < tol.momentum {
            break;
        }
        if iter >= tol.max_newton_iterations || failures >= MAX_FAILED_STEPS {
            return Err(SolverError::NonConvergence {
                iterations: iter,
                residual: mass.max(mom),
                history: worst_of(&mass_history, &momentum_history),
            });
        }
        let merit0 = prob.merit(&asm.res);
        if let Some(lu) = &lagged {
            let mut dx: Vec<f64> = asm.res.iter().map(|r| -r).collect();
            solve_in_place(lu, &mut dx);
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
            let (mut ut, mut vt, mut pt) = (u.clone(), v.clone(), p.clone());
            prob.scatter(&xt, &mut ut, &mut vt, &mut pt);
            let m = prob.merit(&prob.assemble(&ut, &vt, &pt, None, false).res);
            if m.is_finite() && m <= CHORD_CONTRACTION * merit0 {
                x = xt;
                u = ut;
                v = vt;
                p = pt;
                iter += 1;
                continue;
            }
            lagged = None;
        }
        let mut vals = asm.vals;
        if let Some(dt) = dtau {
            for &k in &diag_slots {
                vals[k] += inertia / dt;
            }
        }
        let lu = pattern.factor(&vals).map_err(|_| SolverError::NonConvergence {
            iterations: iter,
            residual: mass.max(mom),
            history: worst_of(&mass_history, &momentum_history),
        })?;
        let mut dx: Vec<f64> = asm.res.iter().map(|r| -r).collect();
        solve_in_place(&lu, &mut dx);

        let (mut ut, mut vt, mut pt) = (u.clone(), v.clone(), p.clone());
        let mut xt = x.clone();
        let trial = |alpha: f64, xt: &mut Vec<f64>, ut: &mut Vec<f64>, vt: &mut Vec<f64>, pt: &mut Vec<f64>| {
            for (k, xk) in xt.iter_mut().enumerate() {
                *xk = x[k] + alpha * dx[k];
            }
            prob.scatter(xt, ut, vt, pt);
            prob.merit(&prob.assemble(ut, vt, pt, None, false).res)
        };
        let contracted = match dtau {
            None if iter < PICARD_STEPS => {
                let m = trial(1.0, &mut xt, &mut ut, &mut vt, &mut pt);
                if !m.is_finite() {
                    return Err(SolverError::NonConvergence {
                        iterations: iter,
                        residual: f64::NAN,
                        history: worst_of(&mass_history, &momentum_history),
                    });
                }
                false
            }
            None => {
                let mut alpha = 1.0;
                let mut accepted = None;
                while alpha >= MIN_STEP {
                    let m = trial(alpha, &mut xt, &mut ut, &mut vt, &mut pt);
                    if m.is_finite() && m <= (1.0 - 1e-4 * alpha) * merit0 {
                        accepted = Some(alpha == 1.0 && m <= CHORD_CONTRACTION * merit0);
                        break;
                    }
                    alpha *= 0.5;
                }
                let Some(contracted) = accepted else {
                    log::debug!("flow: line search failed at iteration {iter}, switching to pseudo-transient steps");
                    dtau = Some(dtau0);
                    iter += 1;
                    continue;
                };
                contracted
            }
            Some(dt) => {
                let m = trial(1.0, &mut xt, &mut ut, &mut vt, &mut pt);
                if !m.is_finite() || m > PTC_REJECT * merit0 {
                    failures += 1;
                    dtau = Some(dt * 0.25);
                    iter += 1;
                    continue;
                }
                let growth = if m < merit0 {
                    (merit0 / m).clamp(PTC_MIN_GROWTH, PTC_MAX_GROWTH)
                } else {
                    (merit0 / m).max(PTC_SHRINK)
                };
                dtau = Some(dt * growth);
                m <= CHORD_CONTRACTION * merit0
            }
        };
        if contracted && iter >= PICARD_STEPS {
            lagged = Some(lu);
        }
        x = xt;
        u = ut;
        v = vt;
        p = pt;
        iter += 1;
    }
    Ok(FlowField {
        u,
        v,
        p,
        active: prob.active.clone(),
        iterations: iter,
        mass_history,
        momentum_history,
    })
}

/// Smallest line-search step before falling back to pseudo-transient steps.
const MIN_STEP: f64 = 0.5;
/// Merit reduction a step must achieve for its factorisation to be reused
/// by the next step, and that a step with a reused factorisation must achieve
/// to be accepted.
const CHORD_CONTRACTION: f64 = 0.1;
/// Initial pseudo-time step in units of the cell convection time.
const PTC_CFL: f64 = 5.0;
/// Smallest factor by which the pseudo-time step grows after a step that lowers the merit.
const PTC_MIN_GROWTH: f64 = 2.0;
/// Smallest factor by which the pseudo-time step shrinks after an accepted step that raises the merit.
const PTC_SHRINK: f64 = 0.5;
/// Largest factor by which the pseudo-time step grows per iteration.
const PTC_MAX_GROWTH: f64 = 4.0;
/// Pseudo-transient steps that raise the merit by more than this factor are rejected.
const PTC_REJECT: f64 = 4.0;
/// Rejected pseudo-transient steps tolerated before giving up.
const MAX_FAILED_STEPS: usize = 12;

use super::flow::{FlowField, FlowProblem, NONE};
use super::sparse::{solve_in_place, SparsePattern};
use super::{worst_of, FlowTolerances, SolverError};

const ALPHA_U: f64 = 0.7;
const ALPHA_P: f64 = 0.3;

/// Segregated pressure-correction iteration on the same discrete equations
/// as the Newton solver: relaxed momentum solve with frozen pressure, then a
/// pressure-correction solve that restores continuity.
pub(crate) fn simple(prob: &FlowProblem, tol: &FlowTolerances) -> Result<FlowField, SolverError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let (nx, ny) = (prob.nx, prob.ny);
    let n_vel = prob.n_u + prob.n_v;
    let (mut u, mut v, mut p) = prob.initial_fields();
    let first = prob.assemble(&u, &v, &p, Some(false), true);
    let entries = first.entries.expect("recorded");
    let keep: Vec<bool> = entries.iter().map(|&(r, c)| r < n_vel && c < n_vel).collect();
    let vel_entries: Vec<(usize, usize)> = entries.iter().zip(&keep).filter(|e| *e.1).map(|e| *e.0).collect();
    let diag_slots: Vec<usize> = vel_entries
        .iter()
        .enumerate()
        .filter(|(_, &(r, c))| r == c)
        .map(|(k, _)| k)
        .collect();
    let vel_pattern = SparsePattern::new(n_vel, vel_entries.clone()).map_err(|e| SolverError::InvalidInput(e.0))?;

    // pressure-correction stencil: one entry pair per internal face, one
    // diagonal entry per face touching a boundary with fixed correction
    let cell_p = |c: usize| prob.p_id[c] - n_vel;
    let mut p_entries = Vec::new();
    let mut p_faces: Vec<(usize, usize, usize)> = Vec::new(); // (velocity id, cell a, cell b or NONE)
    for j in 0..ny {
        for i in 1..=nx {
            let id = prob.u_id[j * (nx + 1) + i];
            if id == NONE {
                continue;
            }
            let a = cell_p(j * nx + i - 1);
            if i == nx {
                p_faces.push((id, a, NONE));
                p_entries.push((a, a));
            } else {
                let b = cell_p(j * nx + i);
                p_faces.push((id, a, b));
                p_entries.extend([(a, a), (a, b), (b, b), (b, a)]);
            }
        }
    }
    for j in 0..ny {
        let js = (j + ny - 1) % ny;
        for i in 0..nx {
            let id = prob.v_id[j * nx + i];
            if id == NONE {
                continue;
            }
            let (a, b) = (cell_p(js * nx + i), cell_p(j * nx + i));
            p_faces.push((id, a, b));
            p_entries.extend([(a, a), (a, b), (b, b), (b, a)]);
        }
    }
    let p_pattern = SparsePattern::new(prob.n_p, p_entries).map_err(|e| SolverError::InvalidInput(e.0))?;

    let mut mass_history = Vec::new();
    let mut momentum_history = Vec::new();
    let mut iter = 0;
    loop {
        let asm = prob.assemble(&u, &v, &p, Some(false), false);
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
        if iter >= tol.max_flow_iterations {
            return Err(SolverError::NonConvergence {
                iterations: iter,
                residual: mass.max(mom),
                history: worst_of(&mass_history, &momentum_history),
            });
        }

        // momentum predictor with relaxed diagonal
        let mut vals: Vec<f64> = asm.vals.iter().zip(&keep).filter(|e| *e.1).map(|e| *e.0).collect();
        let mut a_p = vec![0.0; n_vel];
        for &k in &diag_slots {
            a_p[vel_entries[k].0] += vals[k];
        }
        for &k in &diag_slots {
            vals[k] /= ALPHA_U;
        }
        let lu = vel_pattern.factor(&vals).map_err(|_| SolverError::NonConvergence {
            iterations: iter,
            residual: mass.max(mom),
            history: worst_of(&mass_history, &momentum_history),
        })?;
        let mut delta: Vec<f64> = asm.res[..n_vel].iter().map(|r| -r).collect();
        solve_in_place(&lu, &mut delta);
        let mut x = prob.gather(&u, &v, &p);
        for (xi, d) in x.iter_mut().zip(&delta) {
            *xi += d;
        }
        prob.scatter(&x, &mut u, &mut v, &mut p);

        // pressure correction
        let cont = prob.assemble(&u, &v, &p, None, false);
        let mut rhs: Vec<f64> = cont.res[n_vel..].iter().map(|r| -r).collect();
        let mut pv = Vec::with_capacity(p_faces.len() * 4);
        let face_len = |id: usize| if id < prob.n_u { prob.dy } else { prob.dx };
        let d_of = |id: usize| face_len(id) * ALPHA_U / a_p[id];
        for &(id, _, b) in &p_faces {
            let g = prob.rho * face_len(id) * d_of(id);
            if b == NONE {
                pv.push(g);
            } else {
                pv.extend([g, -g, g, -g]);
            }
        }
        let plu = p_pattern.factor(&pv).map_err(|_| SolverError::NonConvergence {
            iterations: iter,
            residual: mass.max(mom),
            history: worst_of(&mass_history, &momentum_history),
        })?;
        solve_in_place(&plu, &mut rhs);
        let pc = rhs;
        for &(id, a, b) in &p_faces {
            let pb = if b == NONE { 0.0 } else { pc[b] };
            x[id] -= d_of(id) * (pb - pc[a]);
        }
        for k in 0..prob.n_p {
            x[n_vel + k] += ALPHA_P * pc[k];
        }
        prob.scatter(&x, &mut u, &mut v, &mut p);
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

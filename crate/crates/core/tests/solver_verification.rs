use finopt_core::geometry::{make_straight_fin_baseline, rasterize, FinShape, GeometryParams};
use finopt_core::solver::{
    pressure_loss, simulate, solve_flow, solve_thermal, DomainSpec, FlowField, FlowMethod, SideBoundary, SimSetup,
    SolverError, ThermalCoupling,
};
use finopt_core::{CellMask, Rect, Vec2};

fn fin_params(domain: &DomainSpec) -> GeometryParams {
    GeometryParams {
        n_fins: 1,
        m_vertices: 4,
        r_max: 2.5e-3,
        r_mid: 1.0,
        design_domain: domain.design_region,
        samples_per_segment: 16,
    }
}

/// One square fin whose edges sit on cell faces of every grid with
/// `nx` a multiple of 64 on the default channel.
fn aligned_fin(domain: &DomainSpec) -> Vec<FinShape> {
    make_straight_fin_baseline(&fin_params(domain), 1.25e-3, 1.25e-3, &[Vec2::new(5e-3, 2.5e-3)]).unwrap()
}

fn setup(nx: usize, ny: usize) -> SimSetup {
    let mut s = SimSetup::default();
    s.domain.nx = nx;
    s.domain.ny = ny;
    s
}

fn flow_for(fins: &[FinShape], s: &SimSetup, method: FlowMethod) -> (CellMask, FlowField) {
    let mask = rasterize(fins, &s.domain.grid());
    let flow = solve_flow(&mask, &s.props, &s.domain, &s.tolerances, method).unwrap();
    (mask, flow)
}

#[test]
fn empty_periodic_channel_has_no_pressure_loss() {
    let (r, f) = simulate(&[], &SimSetup::default()).unwrap();
    assert!(r.dp_loss.abs() < 1e-6, "dp_loss {:e}", r.dp_loss);
    let u_in = SimSetup::default().props.u_in;
    assert!(f.u.iter().all(|u| (u - u_in).abs() < 1e-9));
    assert!(f.v.iter().all(|v| v.abs() < 1e-9));
}

#[test]
fn plane_poiseuille_pressure_drop() {
    let mut s = setup(256, 128);
    s.domain.sides = SideBoundary::Walls;
    let (r, _) = simulate(&[], &s).unwrap();
    let p = &s.props;
    let d = &s.domain;
    let exact = 12.0 * p.mu_f * d.channel_length * p.u_in / d.channel_width.powi(2);
    let rel = (r.dp_loss - exact).abs() / exact;
    assert!(rel < 0.02, "dp {} vs analytic {exact}: {:.3}%", r.dp_loss, 100.0 * rel);
}

#[test]
fn energy_closes_on_empty_and_single_fin_channels() {
    let s = SimSetup::default();
    for (name, fins) in [("empty", Vec::new()), ("single fin", aligned_fin(&s.domain))] {
        let (r, _) = simulate(&fins, &s).unwrap();
        assert!(r.energy_closure < 0.01, "{name}: closure {:e}", r.energy_closure);
    }
}

#[test]
fn layer_exchange_is_antisymmetric() {
    let s = SimSetup::default();
    let fins = aligned_fin(&s.domain);
    let (mask, flow) = flow_for(&fins, &s, FlowMethod::Newton);
    let th = solve_thermal(
        &flow,
        &mask,
        &s.props,
        &s.domain,
        &s.tolerances,
        ThermalCoupling::Monolithic,
    )
    .unwrap();
    let grid = s.domain.grid();
    let (xs, ys) = s.domain.design_cells();
    let area = grid.cell_area();
    let mut into_fluid_layer = 0.0;
    let mut out_of_plate = 0.0;
    let mut magnitude = 0.0;
    for (b, j) in ys.clone().enumerate() {
        for (a, i) in xs.clone().enumerate() {
            let h = if mask.is_solid(i, j) { s.props.h_s } else { s.props.h_f };
            let tb = th.t_bp[b * xs.len() + a];
            let t = th.t[j * grid.nx + i];
            into_fluid_layer += h * area * (tb - t);
            out_of_plate -= h * area * (t - tb);
            magnitude += (h * area * (tb - t)).abs();
        }
    }
    let n = (xs.len() * ys.len()) as f64;
    let machine_sum = n * f64::EPSILON * magnitude;
    assert!((into_fluid_layer - out_of_plate).abs() <= machine_sum);
    let (gained, lost) = th.layer_exchange_totals();
    assert_eq!(gained, -lost);
    assert!(
        (gained - into_fluid_layer).abs() <= machine_sum,
        "{gained} vs {into_fluid_layer}"
    );
}

#[test]
fn no_heat_load_keeps_inlet_temperature() {
    let mut s = setup(64, 32);
    s.props.q_gen = 0.0;
    let fins = aligned_fin(&s.domain);
    let (_, f) = simulate(&fins, &s).unwrap();
    let t_in = s.props.t_in;
    let bound = t_in * s.tolerances.mass;
    for t in f.t.iter().chain(&f.t_bp) {
        assert!((t - t_in).abs() < bound, "{t}");
    }
}

#[test]
fn uncoupled_base_plate_is_reported_as_nonconvergence() {
    let mut s = setup(64, 32);
    s.props.h_f = 0.0;
    s.props.h_s = 0.0;
    for coupling in [ThermalCoupling::Monolithic, ThermalCoupling::picard()] {
        s.settings.coupling = coupling;
        let e = simulate(&[], &s).unwrap_err();
        assert!(matches!(e, SolverError::NonConvergence { .. }), "{coupling:?}: {e}");
    }
}

#[test]
fn temperatures_respect_the_maximum_principle() {
    let s = SimSetup::default();
    let (_, f) = simulate(&aligned_fin(&s.domain), &s).unwrap();
    let floor = s.props.t_in - 1e-9;
    assert!(f.t.iter().chain(&f.t_bp).all(|&t| t >= floor));
}

#[test]
fn picard_and_monolithic_coupling_agree() {
    let s = setup(64, 32);
    let fins = aligned_fin(&s.domain);
    let (mask, flow) = flow_for(&fins, &s, FlowMethod::Newton);
    let mono = solve_thermal(
        &flow,
        &mask,
        &s.props,
        &s.domain,
        &s.tolerances,
        ThermalCoupling::Monolithic,
    )
    .unwrap();
    let pic = solve_thermal(
        &flow,
        &mask,
        &s.props,
        &s.domain,
        &s.tolerances,
        ThermalCoupling::picard(),
    )
    .unwrap();
    let diff = mono
        .t
        .iter()
        .chain(&mono.t_bp)
        .zip(pic.t.iter().chain(&pic.t_bp))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(diff < 1e-3, "max difference {diff:e} K");
}

#[test]
fn converged_flow_conserves_mass_in_every_cell() {
    let s = SimSetup::default();
    let fins = aligned_fin(&s.domain);
    let (mask, flow) = flow_for(&fins, &s, FlowMethod::Newton);
    let grid = s.domain.grid();
    let (nx, ny, dx, dy) = (grid.nx, grid.ny, grid.dx(), grid.dy());
    let scale = s.props.u_in * dy;
    let mut worst = 0.0f64;
    for j in 0..ny {
        for i in 0..nx {
            if mask.is_solid(i, j) || !flow.active[j * nx + i] {
                continue;
            }
            let east = flow.u[j * (nx + 1) + i + 1];
            let west = flow.u[j * (nx + 1) + i];
            let south = flow.v[j * nx + i];
            let north = flow.v[((j + 1) % ny) * nx + i];
            worst = worst.max(((east - west) * dy + (north - south) * dx).abs() / scale);
        }
    }
    assert!(worst < s.tolerances.mass, "worst divergence {worst:e}");
}

#[test]
fn flow_does_not_depend_on_the_thermal_solve() {
    let s = setup(64, 32);
    let fins = aligned_fin(&s.domain);
    let (mask, first) = flow_for(&fins, &s, FlowMethod::Newton);
    solve_thermal(
        &first,
        &mask,
        &s.props,
        &s.domain,
        &s.tolerances,
        ThermalCoupling::Monolithic,
    )
    .unwrap();
    let (_, second) = flow_for(&fins, &s, FlowMethod::Newton);
    assert_eq!(first, second);
}

#[test]
fn segregated_and_coupled_flow_solvers_agree() {
    let s = setup(64, 32);
    let fins = aligned_fin(&s.domain);
    let (mask, newton) = flow_for(&fins, &s, FlowMethod::Newton);
    let (_, simple) = flow_for(&fins, &s, FlowMethod::Simple);
    let grid = s.domain.grid();
    let a = pressure_loss(&newton.p, &mask, &grid);
    let b = pressure_loss(&simple.p, &mask, &grid);
    assert!((a - b).abs() < 1e-4 * a, "{a} vs {b}");
    let du = newton
        .u
        .iter()
        .zip(&simple.u)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(du < 1e-4 * s.props.u_in, "max velocity difference {du:e}");
}

#[test]
fn repeated_simulation_is_bit_identical() {
    let s = SimSetup::default();
    let fins = aligned_fin(&s.domain);
    let (mut a, fa) = simulate(&fins, &s).unwrap();
    let (mut b, fb) = simulate(&fins, &s).unwrap();
    a.wall_time = 0.0;
    b.wall_time = 0.0;
    assert_eq!(a, b);
    assert_eq!(fa, fb);
}

#[test]
fn grid_refinement_converges_monotonically() {
    let dp: Vec<f64> = [(64, 32), (128, 64), (256, 128)]
        .into_iter()
        .map(|(nx, ny)| {
            let mut s = setup(nx, ny);
            s.props.u_in = 0.1;
            simulate(&aligned_fin(&s.domain), &s).unwrap().0.dp_loss
        })
        .collect();
    let d1 = (dp[1] - dp[0]).abs();
    let d2 = (dp[2] - dp[1]).abs();
    assert!(d2 < d1, "successive changes {d1:e} then {d2:e} for {dp:?}");
}

#[test]
fn fin_outside_design_region_still_simulates() {
    let s = SimSetup::default();
    let mut g = fin_params(&s.domain);
    g.design_domain = Rect::new(0.0, 10e-3, 0.0, 5e-3);
    let fins = make_straight_fin_baseline(&g, 1.0e-3, 1.0e-3, &[Vec2::new(1.5e-3, 2.5e-3)]).unwrap();
    let (r, _) = simulate(&fins, &s).unwrap();
    assert!(r.dp_loss > 0.0 && r.t_avg_bp.is_finite());
    let penalty = finopt_core::objective::geometric_penalty(&fins, &s.domain.design_region, 1e4);
    assert!(penalty > 0.0);
}

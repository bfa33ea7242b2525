//! Shared inputs for the benchmarks.

use finopt_core::geometry::GeometryParams;
use finopt_core::runner::RunConfig;
use finopt_core::solver::SimSetup;

/// Default run configuration on a grid of `nx × ny` cells.
pub fn config(nx: usize, ny: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.domain.nx = nx;
    cfg.domain.ny = ny;
    cfg
}

pub fn geometry() -> GeometryParams {
    RunConfig::default().geometry_params()
}

/// The starting design of an optimisation run.
pub fn reference_vector() -> Vec<f64> {
    RunConfig::default().default_mean0()
}

pub fn setup(nx: usize, ny: usize) -> SimSetup {
    config(nx, ny).sim_setup()
}

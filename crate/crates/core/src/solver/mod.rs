//! Pseudo-3D conjugate heat transfer: steady laminar flow in the fin layer,
//! advected heat in that layer, and conduction in the heated base plate,
//! with the two layers exchanging heat through calibrated coefficients.
//!
//! The flow is solved once per geometry (it does not depend on temperature)
//! and the temperature fields follow from one linear solve.

mod flow;
mod reduce;
mod simple;
pub(crate) mod sparse;
mod thermal;

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flow::{solve_flow, FlowField, FlowMethod};
pub use reduce::{average_temperature, pressure_loss};
pub use thermal::{solve_thermal, ThermalCoupling, ThermalField};

use crate::geometry::{
    decode, rasterize, DecisionVector, FinShape, GeometryDiagnostics, GeometryError, GeometryParams,
};
use crate::grid::{CellMask, StructuredGrid};
use crate::math::Rect;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Scaled residual norm of every iteration performed.
        history: Vec<f64>,
    },
    #[error("fins block the channel: no fluid path from inlet to outlet")]
    BlockedChannel,
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Element-wise maximum of the mass and momentum residual histories.
pub(crate) fn worst_of(mass: &[f64], momentum: &[f64]) -> Vec<f64> {
    mass.iter().zip(momentum).map(|(a, b)| a.max(*b)).collect()
}

/// Material properties, exchange coefficients and boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalProps {
    /// Fluid density [kg/m³].
    pub rho_f: f64,
    /// Fluid dynamic viscosity [Pa·s].
    pub mu_f: f64,
    /// Fluid heat capacity [J/(kg·K)].
    pub c_f: f64,
    /// Fluid conductivity [W/(m·K)].
    pub k_f: f64,
    /// Solid density [kg/m³]; unused by the steady model but kept with the material.
    pub rho_s: f64,
    /// Solid heat capacity [J/(kg·K)]; unused by the steady model.
    pub c_s: f64,
    /// Solid conductivity [W/(m·K)].
    pub k_s: f64,
    /// Base plate to fluid exchange coefficient [W/(m²·K)].
    pub h_f: f64,
    /// Base plate to fin exchange coefficient [W/(m²·K)].
    pub h_s: f64,
    /// Mean inlet velocity [m/s].
    pub u_in: f64,
    /// Inlet temperature [K].
    #[serde(rename = "T_in")]
    pub t_in: f64,
    /// Heat flux applied to the base plate [W/m²].
    pub q_gen: f64,
    /// Thickness of the fin layer [m].
    pub dz_ch: f64,
    /// Thickness of the base plate [m].
    pub dz_bp: f64,
}

impl Default for PhysicalProps {
    fn default() -> Self {
        Self {
            rho_f: 1.204,
            mu_f: 1.94e-5,
            c_f: 1006.0,
            k_f: 0.024,
            rho_s: 2700.0,
            c_s: 900.0,
            k_s: 237.0,
            h_f: 80.0,
            h_s: 44500.0,
            u_in: 1.0,
            t_in: 293.15,
            q_gen: 1e5,
            dz_ch: 15e-3,
            dz_bp: 1.25e-3,
        }
    }
}

impl PhysicalProps {
    /// Material constants and layer thicknesses must be positive; the heat
    /// load and the exchange coefficients only non-negative.
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("rho_f", self.rho_f),
            ("mu_f", self.mu_f),
            ("c_f", self.c_f),
            ("k_f", self.k_f),
            ("rho_s", self.rho_s),
            ("c_s", self.c_s),
            ("k_s", self.k_s),
            ("u_in", self.u_in),
            ("T_in", self.t_in),
            ("dz_ch", self.dz_ch),
            ("dz_bp", self.dz_bp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("h_f", self.h_f), ("h_s", self.h_s), ("q_gen", self.q_gen)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidInput(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Treatment of the two channel sides parallel to the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideBoundary {
    /// The channel repeats in the transverse direction.
    #[default]
    Periodic,
    /// No-slip walls with a fully developed parabolic inlet profile. Meant
    /// for verification against plane Poiseuille flow.
    Walls,
}

/// Channel extents, design region and grid resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSpec {
    /// Streamwise length [m]; the inlet is at x = 0.
    pub channel_length: f64,
    /// Transverse width [m].
    pub channel_width: f64,
    /// Footprint of the design region and of the heated base plate [m].
    pub design_region: Rect,
    pub nx: usize,
    pub ny: usize,
    pub sides: SideBoundary,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            channel_length: 10e-3,
            channel_width: 5e-3,
            design_region: Rect::new(2.5e-3, 7.5e-3, 0.0, 5e-3),
            nx: 128,
            ny: 64,
            sides: SideBoundary::Periodic,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.channel_length > 0.0 && self.channel_width > 0.0)
            || !self.channel_length.is_finite()
            || !self.channel_width.is_finite()
        {
            return Err(SolverError::InvalidInput("channel dimensions must be positive".into()));
        }
        if self.nx < 16 || self.ny < 16 {
            return Err(SolverError::InvalidInput(format!(
                "grid must have at least 16 cells per direction, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !self.design_region.is_non_degenerate() || !self.channel().contains_rect(&self.design_region, 1e-12) {
            return Err(SolverError::InvalidInput(
                "design region must be a rectangle inside the channel".into(),
            ));
        }
        let (xs, ys) = self.grid().cells_within(&self.design_region);
        if xs.is_empty() || ys.is_empty() {
            return Err(SolverError::InvalidInput(
                "design region contains no cell centre".into(),
            ));
        }
        Ok(())
    }

    pub fn channel(&self) -> Rect {
        Rect::new(0.0, self.channel_length, 0.0, self.channel_width)
    }

    pub fn grid(&self) -> StructuredGrid {
        StructuredGrid::new(self.channel(), self.nx, self.ny)
    }

    /// Cells of the channel grid that carry a base-plate cell.
    pub fn design_cells(&self) -> (Range<usize>, Range<usize>) {
        self.grid().cells_within(&self.design_region)
    }
}

/// Convergence targets and iteration limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowTolerances {
    /// Largest cell mass imbalance, relative to `rho_f u_in dy`.
    pub mass: f64,
    /// Largest momentum imbalance, relative to `rho_f u_in² dy`.
    pub momentum: f64,
    /// Largest temperature-equation imbalance, relative to the largest sum
    /// of absolute heat flows through any cell.
    pub thermal: f64,
    /// Iteration limit of the segregated flow solver.
    pub max_flow_iterations: usize,
    /// Iteration limit of the coupled Newton flow solver.
    pub max_newton_iterations: usize,
    pub max_thermal_iterations: usize,
}

impl Default for FlowTolerances {
    fn default() -> Self {
        Self {
            mass: 1e-8,
            momentum: 1e-6,
            thermal: 1e-8,
            max_flow_iterations: 20000,
            max_newton_iterations: 300,
            max_thermal_iterations: 5000,
        }
    }
}

/// Solver choices that do not change the discrete problem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub flow: FlowMethod,
    pub coupling: ThermalCoupling,
}

/// Every converged field of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub grid: StructuredGrid,
    /// Streamwise velocity on the `(nx + 1) × ny` vertical faces, row-major.
    pub u: Vec<f64>,
    /// Transverse velocity on the `nx × ny` faces below each cell.
    pub v: Vec<f64>,
    /// Pressure at cell centres; zero in cells the flow cannot reach.
    pub p: Vec<f64>,
    /// Fin-layer temperature at cell centres.
    pub t: Vec<f64>,
    /// Base-plate temperature on the design subgrid, row-major.
    pub t_bp: Vec<f64>,
    /// Cell ranges of the design subgrid.
    pub design_cells: (Range<usize>, Range<usize>),
    pub mask: CellMask,
    pub sides: SideBoundary,
}

impl FieldSet {
    /// Cell-centred velocity magnitude.
    pub fn speed(&self) -> Vec<f64> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let uc = 0.5 * (self.u[j * (nx + 1) + i] + self.u[j * (nx + 1) + i + 1]);
                let vn = match (j + 1 == ny, self.sides) {
                    (false, _) => self.v[(j + 1) * nx + i],
                    (true, SideBoundary::Periodic) => self.v[i],
                    (true, SideBoundary::Walls) => 0.0,
                };
                let vc = 0.5 * (self.v[j * nx + i] + vn);
                out.push(uc.hypot(vc));
            }
        }
        out
    }
}

/// Per-iteration residual norms of one solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualHistory {
    pub mass: Vec<f64>,
    pub momentum: Vec<f64>,
    pub thermal: Vec<f64>,
}

/// Summary of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Line-averaged inlet pressure minus outlet pressure [Pa].
    pub dp_loss: f64,
    /// Area-averaged base-plate temperature [K].
    #[serde(rename = "T_avg_bp")]
    pub t_avg_bp: f64,
    pub residuals: ResidualHistory,
    pub flow_iterations: usize,
    pub thermal_iterations: usize,
    /// Wall-clock seconds spent in the solvers.
    pub wall_time: f64,
    /// `|heat in − net enthalpy outflow| / heat in`.
    pub energy_closure: f64,
}

/// Everything needed to turn a decision vector into a [`SimResult`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimSetup {
    pub props: PhysicalProps,
    pub domain: DomainSpec,
    pub tolerances: FlowTolerances,
    pub settings: SolverSettings,
}

impl SimSetup {
    pub fn validate(&self) -> Result<(), SolverError> {
        self.props.validate()?;
        self.domain.validate()
    }
}

/// Outcome of [`evaluate`]. The decoded fins are kept even when the
/// simulation fails.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub fins: Vec<FinShape>,
    pub diagnostics: GeometryDiagnostics,
    pub outcome: Result<(SimResult, FieldSet), SolverError>,
}

/// Decodes `x`, rasterises it and runs both solvers.
///
/// Geometry errors are returned directly; solver failures are carried in
/// [`Evaluation::outcome`].
pub fn evaluate(x: &DecisionVector, geom: &GeometryParams, setup: &SimSetup) -> Result<Evaluation, GeometryError> {
    let decoded = decode(x, geom)?;
    let outcome = simulate(&decoded.fins, setup);
    Ok(Evaluation {
        fins: decoded.fins,
        diagnostics: decoded.diagnostics,
        outcome,
    })
}

/// Runs flow and heat transfer for an explicit set of fins.
pub fn simulate(fins: &[FinShape], setup: &SimSetup) -> Result<(SimResult, FieldSet), SolverError> {
    setup.validate()?;
    let grid = setup.domain.grid();
    let mask = rasterize(fins, &grid);
    let start = Instant::now();
    let flow = solve_flow(
        &mask,
        &setup.props,
        &setup.domain,
        &setup.tolerances,
        setup.settings.flow,
    )?;
    let thermal = solve_thermal(
        &flow,
        &mask,
        &setup.props,
        &setup.domain,
        &setup.tolerances,
        setup.settings.coupling,
    )?;
    let dp_loss = pressure_loss(&flow.p, &mask, &grid);
    let t_avg_bp = average_temperature(&thermal.t_bp);
    let result = SimResult {
        dp_loss,
        t_avg_bp,
        residuals: ResidualHistory {
            mass: flow.mass_history.clone(),
            momentum: flow.momentum_history.clone(),
            thermal: thermal.history.clone(),
        },
        flow_iterations: flow.iterations,
        thermal_iterations: thermal.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        energy_closure: thermal.energy_closure,
    };
    let fields = FieldSet {
        grid,
        u: flow.u,
        v: flow.v,
        p: flow.p,
        t: thermal.t,
        t_bp: thermal.t_bp,
        design_cells: setup.domain.design_cells(),
        mask,
        sides: setup.domain.sides,
    };
    Ok((result, fields))
}

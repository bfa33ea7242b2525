//! Scalar cost: pressure loss plus penalties for leaving the design region
//! and for exceeding the temperature limit.

use serde::{Deserialize, Serialize};

use crate::geometry::FinShape;
use crate::math::Rect;
use crate::solver::{SimResult, SolverError};

/// Penalty weights and the temperature limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Cost per meter of fin extent outside the design region [Pa/m].
    pub lambda_geom: f64,
    /// Cost per kelvin above the temperature limit [Pa/K].
    pub lambda_thermal: f64,
    /// Upper bound on the average base-plate temperature [K].
    #[serde(rename = "T_cons")]
    pub t_cons: f64,
    /// Cost of an evaluation whose simulation failed [Pa].
    pub j_fail: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda_geom: 1e4,
            lambda_thermal: 10.0,
            t_cons: 500.0,
            j_fail: 1e6,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lambda_geom >= 0.0 && self.lambda_thermal >= 0.0) {
            return Err("penalty weights must be non-negative".into());
        }
        if !(self.t_cons > 0.0 && self.t_cons.is_finite()) {
            return Err("T_cons must be positive".into());
        }
        if !self.j_fail.is_finite() {
            return Err("j_fail must be finite".into());
        }
        Ok(())
    }
}

/// Bounding-box overshoot of one fin beyond `domain`, summed over the four
/// sides [m].
pub fn domain_overshoot(shape: &FinShape, domain: &Rect) -> f64 {
    let b = &shape.bbox;
    (domain.x_min - b.x_min).max(0.0)
        + (b.x_max - domain.x_max).max(0.0)
        + (domain.y_min - b.y_min).max(0.0)
        + (b.y_max - domain.y_max).max(0.0)
}

/// `w` times the total overshoot of all fins.
pub fn geometric_penalty(shapes: &[FinShape], domain: &Rect, w: f64) -> f64 {
    w * shapes.iter().map(|s| domain_overshoot(s, domain)).sum::<f64>()
}

/// `lambda_thermal (T − T_cons)` above the limit, zero at or below it.
pub fn thermal_penalty(t_avg: f64, cfg: &PenaltyConfig) -> f64 {
    if t_avg > cfg.t_cons {
        cfg.lambda_thermal * (t_avg - cfg.t_cons)
    } else {
        0.0
    }
}

/// Cost of one design with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j: f64,
    /// Pressure loss of the simulated design; absent when it failed.
    pub dp_loss: Option<f64>,
    pub p_geom: f64,
    pub p_thermal: f64,
    pub failed: bool,
}

impl CostBreakdown {
    pub fn is_feasible(&self) -> bool {
        !self.failed && self.p_geom == 0.0 && self.p_thermal == 0.0
    }
}

/// `J = dp_loss + P_geom + P_thermal`, or `J_fail` when the simulation failed.
pub fn cost(
    sim: Result<&SimResult, &SolverError>,
    shapes: &[FinShape],
    domain: &Rect,
    cfg: &PenaltyConfig,
) -> CostBreakdown {
    let p_geom = geometric_penalty(shapes, domain, cfg.lambda_geom);
    match sim {
        Ok(r) if r.dp_loss.is_finite() && r.t_avg_bp.is_finite() => {
            let p_thermal = thermal_penalty(r.t_avg_bp, cfg);
            CostBreakdown {
                j: r.dp_loss + p_geom + p_thermal,
                dp_loss: Some(r.dp_loss),
                p_geom,
                p_thermal,
                failed: false,
            }
        }
        _ => failed_cost(p_geom, cfg),
    }
}

/// Breakdown of an evaluation that produced no simulation result.
pub fn failed_cost(p_geom: f64, cfg: &PenaltyConfig) -> CostBreakdown {
    CostBreakdown {
        j: cfg.j_fail,
        dp_loss: None,
        p_geom,
        p_thermal: 0.0,
        failed: true,
    }
}
